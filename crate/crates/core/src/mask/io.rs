//! `.vpsg` segmentation map files.
//!
//! Layout (little-endian): magic `VPSG`, u32 version, u32 width, u32 height,
//! u32 category count, then per category u16 class id, u8 is_thing, u8 name
//! length and the name bytes, then one u32 `(class_id << 16) | instance_id`
//! per pixel in row-major order.

use std::fs;
use std::path::Path;

use super::{Category, Label, SegmentationMap};
use crate::binio::LeReader;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VPSG";
const VERSION: u32 = 1;

pub fn encode_segmap(map: &SegmentationMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * map.labels().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.categories().len() as u32).to_le_bytes());
    for cat in map.categories() {
        out.extend_from_slice(&cat.class_id.to_le_bytes());
        out.push(cat.is_thing as u8);
        out.push(cat.name.len() as u8);
        out.extend_from_slice(cat.name.as_bytes());
    }
    for label in map.labels() {
        out.extend_from_slice(&label.packed().to_le_bytes());
    }
    out
}

pub fn decode_segmap(bytes: &[u8]) -> Result<SegmentationMap> {
    let mut r = LeReader::new(bytes);
    if r.take(4).map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let n_categories = r.u32()? as usize;
    let mut categories = Vec::new();
    for _ in 0..n_categories {
        let class_id = r.u16()?;
        let is_thing = match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(Error::InvalidMap(format!("is_thing byte {v}"))),
        };
        let len = r.u8()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::InvalidMap("category name is not UTF-8".into()))?;
        categories.push(Category {
            class_id,
            is_thing,
            name,
        });
    }
    let n_pixels = width
        .checked_mul(height)
        .filter(|n| n.checked_mul(4).is_some_and(|b| b <= r.remaining()))
        .ok_or(Error::TruncatedFile)?;
    let mut labels = Vec::with_capacity(n_pixels);
    for _ in 0..n_pixels {
        labels.push(Label::from_packed(r.u32()?));
    }
    r.finish()?;
    SegmentationMap::new(width, height, labels, categories)
}

pub fn read_segmap(path: impl AsRef<Path>) -> Result<SegmentationMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).at(path))?;
    decode_segmap(&bytes).map_err(|e| e.at(path))
}

pub fn write_segmap(map: &SegmentationMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_segmap(map)).map_err(|e| Error::from(e).at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SegmentationMap {
        let cats = vec![Category::stuff(1, "road"), Category::thing(10, "car")];
        let labels = vec![
            Label::new(1, 0),
            Label::new(10, 3),
            Label::new(10, 3),
            Label::new(10, 0),
            Label::new(1, 0),
            Label::new(10, 65535),
        ];
        SegmentationMap::new(3, 2, labels, cats).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_segmap(&sample());
        assert_eq!(&bytes[..4], b"VPSG");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2);
        // two categories: 4 + 4 bytes of name "road", 4 + 3 for "car"
        assert_eq!(bytes.len(), 20 + 8 + 7 + 6 * 4);
        let last = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        assert_eq!(last, (10 << 16) | 65535);
    }

    #[test]
    fn decode_inverts_encode() {
        let map = sample();
        let bytes = encode_segmap(&map);
        let back = decode_segmap(&bytes).unwrap();
        assert_eq!(back, map);
        assert_eq!(encode_segmap(&back), bytes);
    }

    #[test]
    fn malformed_inputs() {
        let good = encode_segmap(&sample());

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_segmap(&bad), Err(Error::BadMagic)));
        assert!(matches!(decode_segmap(b"VP"), Err(Error::BadMagic)));

        assert!(matches!(
            decode_segmap(&good[..good.len() - 1]),
            Err(Error::TruncatedFile)
        ));
        assert!(matches!(decode_segmap(&good[..10]), Err(Error::TruncatedFile)));

        let mut unknown = good.clone();
        let n = unknown.len();
        unknown[n - 4..].copy_from_slice(&((77u32 << 16) | 1).to_le_bytes());
        assert!(matches!(decode_segmap(&unknown), Err(Error::UnknownClassId(77))));

        let mut version = good.clone();
        version[4] = 2;
        assert!(matches!(
            decode_segmap(&version),
            Err(Error::UnsupportedVersion(2))
        ));

        let mut trailing = good;
        trailing.push(0);
        assert!(matches!(decode_segmap(&trailing), Err(Error::TrailingBytes(1))));
    }
}
