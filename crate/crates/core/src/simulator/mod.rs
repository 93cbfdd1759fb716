//! Seeded synthetic panoptic video: moving rectangles and ellipses over
//! horizontal stuff bands, with exact flow and persistent track ids.

mod presets;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::instance::{MatchSupervision, RoiConfig, TrainingPair};
use crate::mask::{extract_things, Category, Label, SegmentationMap};

pub use presets::{distinct_shapes, preset, PRESET_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rect,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub class_id: u16,
    /// Width and height at frame 0, in pixels.
    pub size: [f64; 2],
    /// Centre at frame 0.
    pub position: [f64; 2],
    /// Centre displacement per frame.
    pub velocity: [f64; 2],
    /// Size multiplier applied every frame; 1 means rigid.
    #[serde(default = "one")]
    pub scale_per_frame: f64,
    /// Higher values are painted on top.
    #[serde(default)]
    pub z: i32,
    /// Half-open frame intervals where the object is drawn; empty means always.
    #[serde(default)]
    pub visible: Vec<(usize, usize)>,
}

fn one() -> f64 {
    1.0
}

impl ObjectSpec {
    pub fn new(shape: Shape, class_id: u16, size: [f64; 2], position: [f64; 2], velocity: [f64; 2]) -> Self {
        Self {
            shape,
            class_id,
            size,
            position,
            velocity,
            scale_per_frame: 1.0,
            z: 0,
            visible: vec![],
        }
    }

    pub fn is_visible(&self, frame: usize) -> bool {
        self.visible.is_empty() || self.visible.iter().any(|&(a, b)| (a..b).contains(&frame))
    }

    fn center(&self, frame: usize) -> [f64; 2] {
        let f = frame as f64;
        [
            self.position[0] + f * self.velocity[0],
            self.position[1] + f * self.velocity[1],
        ]
    }

    fn half_size(&self, frame: usize) -> [f64; 2] {
        let s = self.scale_per_frame.powi(frame as i32);
        [0.5 * self.size[0] * s, 0.5 * self.size[1] * s]
    }

    /// Whether the object covers the pixel centre `(px, py)` at `frame`.
    fn covers(&self, frame: usize, px: f64, py: f64) -> bool {
        let [cx, cy] = self.center(frame);
        let [hw, hh] = self.half_size(frame);
        let (dx, dy) = (px - cx, py - cy);
        match self.shape {
            Shape::Rect => -hw <= dx && dx < hw && -hh <= dy && dy < hh,
            Shape::Ellipse => (dx / hw).powi(2) + (dy / hh).powi(2) <= 1.0,
        }
    }

    /// Where the material point at pixel centre `p` moves by the next frame.
    fn displacement(&self, frame: usize, px: f64, py: f64) -> [f64; 2] {
        let [cx, cy] = self.center(frame);
        let [nx, ny] = self.center(frame + 1);
        let s = self.scale_per_frame;
        [nx + s * (px - cx) - px, ny + s * (py - cy) - py]
    }
}

/// Everything needed to render one synthetic sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    /// Stuff classes, painted as equal horizontal bands from the top.
    pub stuff: Vec<Category>,
    pub things: Vec<Category>,
    pub objects: Vec<ObjectSpec>,
    /// Drives the per-frame shuffle of instance ids.
    pub seed: u64,
}

impl SceneSpec {
    pub fn categories(&self) -> Vec<Category> {
        self.stuff.iter().chain(&self.things).cloned().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let oob = |msg: String| Err(Error::SpecOutOfBounds(msg));
        if self.width == 0 || self.height == 0 || self.n_frames == 0 {
            return oob(format!(
                "{}x{} frames, {} of them",
                self.width, self.height, self.n_frames
            ));
        }
        if self.stuff.is_empty() || self.stuff.len() > self.height {
            return oob(format!("{} stuff bands", self.stuff.len()));
        }
        if self.stuff.iter().any(|c| c.is_thing) || self.things.iter().any(|c| !c.is_thing) {
            return oob("stuff and thing category lists are mixed up".into());
        }
        if self.objects.len() >= u16::MAX as usize {
            return oob(format!("{} objects", self.objects.len()));
        }
        for (k, o) in self.objects.iter().enumerate() {
            if !self.things.iter().any(|c| c.class_id == o.class_id) {
                return oob(format!("object {k} has non-thing class {}", o.class_id));
            }
            let sizes_ok = o.size.iter().all(|&s| s.is_finite() && s > 0.0);
            if !sizes_ok || !(o.scale_per_frame.is_finite() && o.scale_per_frame > 0.0) {
                return oob(format!("object {k} has a degenerate size or scale"));
            }
            let [cx, cy] = o.position;
            let [hw, hh] = o.half_size(0);
            if cx - hw < 0.0
                || cy - hh < 0.0
                || cx + hw > self.width as f64
                || cy + hh > self.height as f64
            {
                return oob(format!("object {k} starts outside the frame"));
            }
            if o.velocity.iter().any(|v| !v.is_finite()) {
                return oob(format!("object {k} has a non-finite velocity"));
            }
            if o.visible.iter().any(|&(a, b)| a >= b || b > self.n_frames) {
                return oob(format!("object {k} has a visibility interval outside the sequence"));
            }
        }
        SegmentationMap::new(0, 0, vec![], self.categories())
            .map_err(|e| Error::SpecOutOfBounds(e.to_string()))?;
        Ok(())
    }
}

/// Rendered sequence with its ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedSequence {
    /// Tracker input: instance ids are shuffled independently per frame.
    pub frames: Vec<SegmentationMap>,
    /// `flows[t]` carries frame `t` to frame `t + 1`.
    pub flows: Vec<FlowField>,
    /// Per frame, local instance id to persistent track id.
    pub gt_ids: Vec<BTreeMap<u16, u16>>,
    /// Ground truth for evaluation: frames relabelled with track ids.
    pub gt_frames: Vec<SegmentationMap>,
}

impl GeneratedSequence {
    /// Track id of each object index (`index + 1`).
    pub fn track_id(object: usize) -> u16 {
        object as u16 + 1
    }
}

pub fn generate(spec: &SceneSpec) -> Result<GeneratedSequence> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let categories = spec.categories();
    let mut paint_order: Vec<usize> = (0..spec.objects.len()).collect();
    paint_order.sort_by_key(|&k| spec.objects[k].z);
    let band = |y: usize| spec.stuff[y * spec.stuff.len() / h].class_id;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut frames = Vec::with_capacity(spec.n_frames);
    let mut gt_frames = Vec::with_capacity(spec.n_frames);
    let mut gt_ids = Vec::with_capacity(spec.n_frames);
    let mut flows = Vec::with_capacity(spec.n_frames.saturating_sub(1));
    for t in 0..spec.n_frames {
        let mut owner: Vec<Option<usize>> = vec![None; w * h];
        for &k in &paint_order {
            let o = &spec.objects[k];
            if !o.is_visible(t) {
                continue;
            }
            for y in 0..h {
                for x in 0..w {
                    if o.covers(t, x as f64 + 0.5, y as f64 + 0.5) {
                        owner[y * w + x] = Some(k);
                    }
                }
            }
        }

        let mut present: Vec<usize> = owner.iter().flatten().copied().collect();
        present.sort_unstable();
        present.dedup();
        let mut local: Vec<u16> = (1..=present.len() as u16).collect();
        local.shuffle(&mut rng);
        let local_of: BTreeMap<usize, u16> = present.iter().copied().zip(local).collect();
        gt_ids.push(
            local_of
                .iter()
                .map(|(&k, &l)| (l, GeneratedSequence::track_id(k)))
                .collect(),
        );

        let mut labels = Vec::with_capacity(w * h);
        let mut gt_labels = Vec::with_capacity(w * h);
        for (i, o) in owner.iter().enumerate() {
            match o {
                Some(k) => {
                    let class = spec.objects[*k].class_id;
                    labels.push(Label::new(class, local_of[k]));
                    gt_labels.push(Label::new(class, GeneratedSequence::track_id(*k)));
                }
                None => {
                    let l = Label::new(band(i / w), 0);
                    labels.push(l);
                    gt_labels.push(l);
                }
            }
        }
        frames.push(SegmentationMap::new(w, h, labels, categories.clone())?);
        gt_frames.push(SegmentationMap::new(w, h, gt_labels, categories.clone())?);

        if t + 1 < spec.n_frames {
            let vectors = owner
                .iter()
                .enumerate()
                .map(|(i, o)| match o {
                    Some(k) => {
                        let (px, py) = ((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
                        let [u, v] = spec.objects[*k].displacement(t, px, py);
                        [u as f32, v as f32]
                    }
                    None => [0.0, 0.0],
                })
                .collect();
            flows.push(FlowField::new(w, h, vectors)?);
        }
    }
    Ok(GeneratedSequence {
        frames,
        flows,
        gt_ids,
        gt_frames,
    })
}

/// Relabels tracker-input frames with ground-truth track ids.
pub fn apply_gt_ids(frames: &[SegmentationMap], gt_ids: &[BTreeMap<u16, u16>]) -> Result<Vec<SegmentationMap>> {
    if frames.len() != gt_ids.len() {
        return Err(Error::LengthMismatch {
            expected: frames.len(),
            actual: gt_ids.len(),
        });
    }
    frames
        .iter()
        .zip(gt_ids)
        .enumerate()
        .map(|(t, (f, ids))| {
            let mut missing = None;
            let out = f.map_instances(|l| {
                ids.get(&l.instance_id).copied().unwrap_or_else(|| {
                    missing = Some(l.instance_id);
                    0
                })
            })?;
            match missing {
                Some(id) => Err(Error::InvalidMap(format!(
                    "frame {t}: instance {id} has no ground-truth track"
                ))),
                None => Ok(out),
            }
        })
        .collect()
}

/// Supervised RoI pairs from every consecutive frame pair of a sequence.
pub fn training_pairs(seq: &GeneratedSequence, roi: &RoiConfig) -> Result<Vec<TrainingPair>> {
    let mut out = Vec::new();
    for t in 0..seq.frames.len().saturating_sub(1) {
        let prev = extract_things(&seq.frames[t]);
        let cur = extract_things(&seq.frames[t + 1]);
        let track = |frame: usize, id: u16| seq.gt_ids[frame].get(&id).copied();
        let pairs: Vec<(usize, usize)> = prev
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let tid = track(t, p.instance_id())?;
                cur.iter()
                    .position(|c| track(t + 1, c.instance_id()) == Some(tid))
                    .map(|j| (i, j))
            })
            .collect();
        let supervision = MatchSupervision::new(pairs, prev.len(), cur.len())?;
        out.push(TrainingPair {
            prev: prev.iter().map(|m| roi.roi_values(m)).collect::<Result<_>>()?,
            cur: cur.iter().map(|m| roi.roi_values(m)).collect::<Result<_>>()?,
            supervision,
        });
    }
    Ok(out)
}

/// Per ground-truth track, the number of times its predicted id changes
/// between consecutive appearances, summed over tracks.
pub fn count_id_switches(pred: &[SegmentationMap], gt: &[SegmentationMap]) -> Result<usize> {
    Ok(id_histories(pred, gt)?
        .values()
        .map(|h| h.windows(2).filter(|w| w[0] != w[1]).count())
        .sum())
}

/// For each ground-truth track, the predicted ids it received in frame order.
/// The predicted id of a ground-truth segment is the one covering most of it.
pub fn id_histories(pred: &[SegmentationMap], gt: &[SegmentationMap]) -> Result<BTreeMap<u16, Vec<u16>>> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            actual: pred.len(),
        });
    }
    let mut out: BTreeMap<u16, Vec<u16>> = BTreeMap::new();
    for (p, g) in pred.iter().zip(gt) {
        crate::mask::check_dims(g.dims(), p.dims())?;
        let mut votes: BTreeMap<Label, BTreeMap<u16, usize>> = BTreeMap::new();
        for (&pl, &gl) in p.labels().iter().zip(g.labels()) {
            if g.is_thing(gl.class_id) && gl.instance_id != 0 {
                *votes.entry(gl).or_default().entry(pl.instance_id).or_default() += 1;
            }
        }
        for (gl, v) in votes {
            let best = v
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&id, _)| id)
                .unwrap_or(0);
            out.entry(gl.instance_id).or_default().push(best);
        }
    }
    Ok(out)
}
