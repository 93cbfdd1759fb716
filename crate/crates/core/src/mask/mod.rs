//! Panoptic label maps, binary instance masks and RoI geometry.

mod io;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{decode_segmap, encode_segmap, read_segmap, write_segmap};

/// Instance id used by stuff pixels, and by thing pixels that are void.
pub const VOID_INSTANCE: u16 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub class_id: u16,
    pub is_thing: bool,
    pub name: String,
}

impl Category {
    pub fn thing(class_id: u16, name: impl Into<String>) -> Self {
        Self {
            class_id,
            is_thing: true,
            name: name.into(),
        }
    }

    pub fn stuff(class_id: u16, name: impl Into<String>) -> Self {
        Self {
            class_id,
            is_thing: false,
            name: name.into(),
        }
    }
}

/// The label of a single pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Label {
    pub class_id: u16,
    pub instance_id: u16,
}

impl Label {
    pub const fn new(class_id: u16, instance_id: u16) -> Self {
        Self {
            class_id,
            instance_id,
        }
    }

    /// Packed `(class_id << 16) | instance_id` form used on disk.
    pub const fn packed(self) -> u32 {
        ((self.class_id as u32) << 16) | self.instance_id as u32
    }

    pub const fn from_packed(v: u32) -> Self {
        Self::new((v >> 16) as u16, v as u16)
    }
}

/// A per-pixel panoptic labeling of one frame.
///
/// Every pixel carries a class id listed in `categories`. Stuff pixels always
/// have instance id 0; a thing pixel with instance id 0 is void.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMap {
    width: usize,
    height: usize,
    labels: Vec<Label>,
    categories: Vec<Category>,
}

impl SegmentationMap {
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<Label>,
        categories: Vec<Category>,
    ) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::InvalidMap(format!(
                "{} labels for a {width}x{height} map",
                labels.len()
            )));
        }
        let mut things = BTreeMap::new();
        for cat in &categories {
            if cat.name.len() > u8::MAX as usize {
                return Err(Error::InvalidMap(format!(
                    "category name longer than 255 bytes: {:?}",
                    cat.name
                )));
            }
            if things.insert(cat.class_id, cat.is_thing).is_some() {
                return Err(Error::InvalidMap(format!(
                    "duplicate category {}",
                    cat.class_id
                )));
            }
        }
        for label in &labels {
            let is_thing = *things
                .get(&label.class_id)
                .ok_or(Error::UnknownClassId(label.class_id))?;
            if !is_thing && label.instance_id != VOID_INSTANCE {
                return Err(Error::InvalidMap(format!(
                    "stuff class {} carries instance id {}",
                    label.class_id, label.instance_id
                )));
            }
        }
        Ok(Self {
            width,
            height,
            labels,
            categories,
        })
    }

    /// A map with every pixel set to `fill`.
    pub fn filled(
        width: usize,
        height: usize,
        fill: Label,
        categories: Vec<Category>,
    ) -> Result<Self> {
        Self::new(width, height, vec![fill; width * height], categories)
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

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn label(&self, x: usize, y: usize) -> Label {
        self.labels[y * self.width + x]
    }

    pub fn category(&self, class_id: u16) -> Option<&Category> {
        self.categories.iter().find(|c| c.class_id == class_id)
    }

    pub fn is_thing(&self, class_id: u16) -> bool {
        self.category(class_id).is_some_and(|c| c.is_thing)
    }

    pub fn is_void(&self, label: Label) -> bool {
        label.instance_id == VOID_INSTANCE && self.is_thing(label.class_id)
    }

    /// Rewrites thing instance ids through `f`; stuff and void pixels are kept.
    pub fn map_instances(&self, mut f: impl FnMut(Label) -> u16) -> Result<Self> {
        let thing: BTreeMap<u16, bool> = self
            .categories
            .iter()
            .map(|c| (c.class_id, c.is_thing))
            .collect();
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if thing[&l.class_id] && l.instance_id != VOID_INSTANCE {
                    Label::new(l.class_id, f(l))
                } else {
                    l
                }
            })
            .collect();
        Self::new(self.width, self.height, labels, self.categories.clone())
    }
}

/// A binary mask of one segment with its panoptic identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    class_id: u16,
    instance_id: u16,
    area: usize,
}

impl InstanceMask {
    pub fn empty(width: usize, height: usize, class_id: u16, instance_id: u16) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
            class_id,
            instance_id,
            area: 0,
        }
    }

    /// Builds a mask from pixel coordinates; out-of-frame pixels are ignored.
    pub fn from_pixels(
        width: usize,
        height: usize,
        class_id: u16,
        instance_id: u16,
        pixels: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let mut mask = Self::empty(width, height, class_id, instance_id);
        for (x, y) in pixels {
            if x < width && y < height {
                mask.set(x, y);
            }
        }
        mask
    }

    pub fn from_bits(
        width: usize,
        height: usize,
        class_id: u16,
        instance_id: u16,
        bits: Vec<bool>,
    ) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        let area = bits.iter().filter(|&&b| b).count();
        Ok(Self {
            width,
            height,
            bits,
            class_id,
            instance_id,
            area,
        })
    }

    pub fn set(&mut self, x: usize, y: usize) {
        let bit = &mut self.bits[y * self.width + x];
        if !*bit {
            *bit = true;
            self.area += 1;
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn class_id(&self) -> u16 {
        self.class_id
    }

    pub fn instance_id(&self) -> u16 {
        self.instance_id
    }

    pub fn area(&self) -> usize {
        self.area
    }

    pub fn is_empty(&self) -> bool {
        self.area == 0
    }

    pub fn with_instance_id(mut self, instance_id: u16) -> Self {
        self.instance_id = instance_id;
        self
    }

    /// Set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Number of pixels set in both masks.
    pub fn intersection(&self, other: &InstanceMask) -> Result<usize> {
        check_dims(self.dims(), other.dims())?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count())
    }
}

pub(crate) fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

/// Splits a map into one mask per thing instance and one per stuff class.
///
/// Void pixels belong to no mask. Masks come out sorted by
/// `(class_id, instance_id)`.
pub fn extract_instances(map: &SegmentationMap) -> Vec<InstanceMask> {
    let mut masks: BTreeMap<Label, InstanceMask> = BTreeMap::new();
    let (w, h) = map.dims();
    for (i, &label) in map.labels().iter().enumerate() {
        if map.is_void(label) {
            continue;
        }
        masks
            .entry(label)
            .or_insert_with(|| InstanceMask::empty(w, h, label.class_id, label.instance_id))
            .set(i % w, i / w);
    }
    masks.into_values().collect()
}

/// Like [`extract_instances`] but keeps only thing instances.
pub fn extract_things(map: &SegmentationMap) -> Vec<InstanceMask> {
    extract_instances(map)
        .into_iter()
        .filter(|m| map.is_thing(m.class_id()))
        .collect()
}

/// Inclusive pixel bounds of a mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    pub fn as_tuple(&self) -> (usize, usize, usize, usize) {
        (self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

pub fn bounding_box(mask: &InstanceMask) -> Result<BoundingBox> {
    let mut pixels = mask.pixels();
    let (x0, y0) = pixels.next().ok_or(Error::EmptyMask)?;
    let init = BoundingBox {
        x_min: x0,
        y_min: y0,
        x_max: x0,
        y_max: y0,
    };
    Ok(pixels.fold(init, |b, (x, y)| BoundingBox {
        x_min: b.x_min.min(x),
        y_min: b.y_min.min(y),
        x_max: b.x_max.max(x),
        y_max: b.y_max.max(y),
    }))
}

/// Where the rescaled crop sits inside the RoI grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiAnchor {
    #[default]
    TopLeft,
    Center,
}

/// A fixed-shape RoI grid holding an aspect-preserving rescale of a mask crop.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiMask {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl RoiMask {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width} RoI",
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Row-major values, i.e. the flattened embedding input.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Extent `(rows, cols)` of a `box_h x box_w` crop after rescaling by
/// `min(h_roi / box_h, w_roi / box_w)`, floored and never below one cell.
pub fn scaled_extent(box_h: usize, box_w: usize, h_roi: usize, w_roi: usize) -> (usize, usize) {
    // h_roi / box_h <= w_roi / box_w  <=>  h_roi * box_w <= w_roi * box_h
    if h_roi * box_w <= w_roi * box_h {
        (h_roi, (box_w * h_roi / box_h).clamp(1, w_roi))
    } else {
        ((box_h * w_roi / box_w).clamp(1, h_roi), w_roi)
    }
}

/// Crops a mask to its bounding box, rescales it without distortion using
/// nearest-neighbour sampling and pads the rest of the `h_roi x w_roi` grid
/// with zeros. The crop is anchored top-left.
pub fn crop_scale_pad(mask: &InstanceMask, h_roi: usize, w_roi: usize) -> Result<RoiMask> {
    crop_scale_pad_anchored(mask, h_roi, w_roi, RoiAnchor::TopLeft)
}

pub fn crop_scale_pad_anchored(
    mask: &InstanceMask,
    h_roi: usize,
    w_roi: usize,
    anchor: RoiAnchor,
) -> Result<RoiMask> {
    if h_roi == 0 || w_roi == 0 {
        return Err(Error::ShapeMismatch(format!(
            "RoI shape {h_roi}x{w_roi} must be at least 1x1"
        )));
    }
    let bbox = bounding_box(mask)?;
    let (box_h, box_w) = (bbox.height(), bbox.width());
    let (out_h, out_w) = scaled_extent(box_h, box_w, h_roi, w_roi);
    let (off_r, off_c) = match anchor {
        RoiAnchor::TopLeft => (0, 0),
        RoiAnchor::Center => ((h_roi - out_h) / 2, (w_roi - out_w) / 2),
    };

    let mut values = vec![0.0; h_roi * w_roi];
    for r in 0..out_h {
        // sample at the source pixel under the centre of the output cell
        let src_y = bbox.y_min + (2 * r + 1) * box_h / (2 * out_h);
        for c in 0..out_w {
            let src_x = bbox.x_min + (2 * c + 1) * box_w / (2 * out_w);
            if mask.contains(src_x, src_y) {
                values[(off_r + r) * w_roi + off_c + c] = 1.0;
            }
        }
    }
    RoiMask::new(h_roi, w_roi, values)
}
