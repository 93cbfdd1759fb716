//! Dense optical flow fields, `.flo` I/O and forward mask warping.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::binio::LeReader;
use crate::error::{Error, Result};
use crate::mask::{check_dims, InstanceMask};

/// `.flo` tag: the float32 202021.25, whose bytes spell "PIEH".
pub const FLO_MAGIC: f32 = 202021.25;

/// Largest pixel count accepted from a `.flo` header.
const MAX_FLO_PIXELS: i64 = 1 << 28;

/// Per-pixel displacement `(u, v)` from one frame to the next, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, vectors: Vec<[f32; 2]>) -> Result<Self> {
        if vectors.len() != width * height {
            return Err(Error::InvalidFlow(format!(
                "{} vectors for a {width}x{height} field",
                vectors.len()
            )));
        }
        if let Some(i) = vectors
            .iter()
            .position(|v| !v[0].is_finite() || !v[1].is_finite())
        {
            return Err(Error::InvalidFlow(format!("non-finite vector at index {i}")));
        }
        Ok(Self {
            width,
            height,
            vectors,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self {
            width,
            height,
            vectors: vec![[u, v]; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn vectors(&self) -> &[[f32; 2]] {
        &self.vectors
    }

    pub fn at(&self, x: usize, y: usize) -> [f32; 2] {
        self.vectors[y * self.width + x]
    }

    /// Adds i.i.d. Gaussian noise of standard deviation `sigma` pixels to
    /// both components of every vector.
    pub fn with_gaussian_noise(&self, sigma: f64, seed: u64) -> Result<Self> {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::InvalidConfig(format!("flow noise sigma {sigma}: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors = self
            .vectors
            .iter()
            .map(|&[u, v]| {
                let du = normal.sample(&mut rng) as f32;
                let dv = normal.sample(&mut rng) as f32;
                [u + du, v + dv]
            })
            .collect();
        Self::new(self.width, self.height, vectors)
    }

    /// Mirrors the field left-right, negating `u`.
    pub fn mirrored(&self) -> Self {
        let mut vectors = Vec::with_capacity(self.vectors.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                let [u, v] = self.at(x, y);
                vectors.push([-u, v]);
            }
        }
        Self {
            width: self.width,
            height: self.height,
            vectors,
        }
    }
}

pub fn encode_flo(field: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * field.vectors.len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(field.width as i32).to_le_bytes());
    out.extend_from_slice(&(field.height as i32).to_le_bytes());
    for [u, v] in &field.vectors {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    let mut r = LeReader::new(bytes);
    let magic = r.f32().map_err(|_| Error::BadMagic)?;
    if magic.to_bits() != FLO_MAGIC.to_bits() {
        return Err(Error::BadMagic);
    }
    let width = r.i32()? as i64;
    let height = r.i32()? as i64;
    if width < 0 || height < 0 || width * height > MAX_FLO_PIXELS {
        return Err(Error::DimensionOverflow { width, height });
    }
    let (width, height) = (width as usize, height as usize);
    if width * height * 8 > r.remaining() {
        return Err(Error::TruncatedFile);
    }
    let mut vectors = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        vectors.push([r.f32()?, r.f32()?]);
    }
    r.finish()?;
    FlowField::new(width, height, vectors)
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).at(path))?;
    decode_flo(&bytes).map_err(|e| e.at(path))
}

pub fn write_flo(field: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_flo(field)).map_err(|e| Error::from(e).at(path))
}

/// Moves every set pixel of `mask` by the flow vector under it.
///
/// Targets are rounded half away from zero; targets outside the frame are
/// dropped and colliding targets collapse into one pixel.
pub fn warp_mask(mask: &InstanceMask, flow: &FlowField) -> Result<InstanceMask> {
    check_dims(mask.dims(), flow.dims())?;
    let (w, h) = mask.dims();
    let mut out = InstanceMask::empty(w, h, mask.class_id(), mask.instance_id());
    for (x, y) in mask.pixels() {
        let [u, v] = flow.at(x, y);
        let tx = (x as f64 + u as f64).round();
        let ty = (y as f64 + v as f64).round();
        if tx >= 0.0 && ty >= 0.0 && tx < w as f64 && ty < h as f64 {
            out.set(tx as usize, ty as usize);
        }
    }
    Ok(out)
}

/// Warps through consecutive flow fields, first to last.
pub fn warp_mask_chain<'a>(
    mask: &InstanceMask,
    flows: impl IntoIterator<Item = &'a FlowField>,
) -> Result<InstanceMask> {
    flows
        .into_iter()
        .try_fold(mask.clone(), |m, flow| warp_mask(&m, flow))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magic_spells_pieh() {
        assert_eq!(&FLO_MAGIC.to_le_bytes(), b"PIEH");
    }

    #[test]
    fn one_pixel_file_is_20_bytes() {
        let bytes = encode_flo(&FlowField::zeros(1, 1));
        assert_eq!(bytes.len(), 20);
        assert_eq!(decode_flo(&bytes).unwrap(), FlowField::zeros(1, 1));
    }

    #[test]
    fn constant_field_is_lossless() {
        let f = FlowField::constant(7, 5, 1.4, -0.6);
        let back = decode_flo(&encode_flo(&f)).unwrap();
        assert!(back
            .vectors()
            .iter()
            .all(|v| v[0].to_bits() == 1.4f32.to_bits() && v[1].to_bits() == (-0.6f32).to_bits()));
    }

    #[test]
    fn malformed_flo() {
        let good = encode_flo(&FlowField::constant(3, 2, 0.5, 0.25));
        let mut bad = good.clone();
        bad[0] ^= 1;
        assert!(matches!(decode_flo(&bad), Err(Error::BadMagic)));
        assert!(matches!(decode_flo(&good[..3]), Err(Error::BadMagic)));
        assert!(matches!(decode_flo(&good[..good.len() - 2]), Err(Error::TruncatedFile)));
        assert!(matches!(decode_flo(&good[..8]), Err(Error::TruncatedFile)));

        let mut neg = good.clone();
        neg[4..8].copy_from_slice(&(-3i32).to_le_bytes());
        assert!(matches!(decode_flo(&neg), Err(Error::DimensionOverflow { .. })));
        let mut huge = good.clone();
        huge[4..8].copy_from_slice(&i32::MAX.to_le_bytes());
        huge[8..12].copy_from_slice(&i32::MAX.to_le_bytes());
        assert!(matches!(decode_flo(&huge), Err(Error::DimensionOverflow { .. })));

        let mut nan = good;
        nan[12..16].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_flo(&nan), Err(Error::InvalidFlow(_))));
    }

    #[test]
    fn unit_shift() {
        let m = InstanceMask::from_pixels(6, 6, 10, 1, [(2, 3)]);
        let out = warp_mask(&m, &FlowField::constant(6, 6, 1.0, 0.0)).unwrap();
        assert_eq!(out.pixels().collect::<Vec<_>>(), vec![(3, 3)]);
        assert_eq!(out.class_id(), 10);
        assert_eq!(out.instance_id(), 1);
    }

    #[test]
    fn zero_flow_is_identity() {
        let m = InstanceMask::from_pixels(5, 4, 10, 2, [(0, 0), (4, 3), (2, 1)]);
        assert_eq!(warp_mask(&m, &FlowField::zeros(5, 4)).unwrap(), m);
    }

    #[test]
    fn pixels_leaving_the_frame_are_dropped() {
        let m = InstanceMask::from_pixels(4, 4, 10, 1, [(3, 0), (0, 0)]);
        let out = warp_mask(&m, &FlowField::constant(4, 4, 1.0, 0.0)).unwrap();
        assert_eq!(out.pixels().collect::<Vec<_>>(), vec![(1, 0)]);
        let gone = warp_mask(&m, &FlowField::constant(4, 4, 0.0, -1.0)).unwrap();
        assert!(gone.is_empty());
    }

    #[test]
    fn collisions_collapse() {
        let m = InstanceMask::from_pixels(4, 1, 10, 1, [(0, 0), (1, 0)]);
        let flow = FlowField::new(4, 1, vec![[2.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
            .unwrap();
        let out = warp_mask(&m, &flow).unwrap();
        assert_eq!(out.area(), 1);
        assert!(out.contains(2, 0));
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let m = InstanceMask::from_pixels(8, 1, 10, 1, [(2, 0), (5, 0)]);
        let flow = FlowField::new(
            8,
            1,
            vec![
                [0.0; 2], [0.0; 2], [0.5, 0.0], [0.0; 2], [0.0; 2], [-0.5, 0.0], [0.0; 2],
                [0.0; 2],
            ],
        )
        .unwrap();
        let out = warp_mask(&m, &flow).unwrap();
        // 2.5 -> 3, 4.5 -> 5
        assert_eq!(out.pixels().collect::<Vec<_>>(), vec![(3, 0), (5, 0)]);
    }

    #[test]
    fn dimension_mismatch() {
        let m = InstanceMask::empty(4, 4, 10, 1);
        assert!(matches!(
            warp_mask(&m, &FlowField::zeros(4, 5)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn noise_is_seeded() {
        let f = FlowField::zeros(4, 4);
        assert_eq!(
            f.with_gaussian_noise(1.5, 9).unwrap(),
            f.with_gaussian_noise(1.5, 9).unwrap()
        );
        assert_ne!(
            f.with_gaussian_noise(1.5, 9).unwrap(),
            f.with_gaussian_noise(1.5, 10).unwrap()
        );
    }
}
