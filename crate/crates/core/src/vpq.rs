//! Video panoptic quality over sliding windows of spatio-temporal tubes.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{check_dims, Category, InstanceMask, Label, SegmentationMap};

/// Window lengths, in evaluated frames, used by default. They correspond to
/// temporal distances k = 0, 5, 10, 15 on a 5-frame annotation stride.
pub const DEFAULT_WINDOWS: [usize; 4] = [1, 2, 3, 4];

/// Annotation stride used to label window lengths as frame distances.
pub const ANNOTATION_STRIDE: usize = 5;

/// Minimum tube IoU for a true positive.
const MATCH_IOU: f64 = 0.5;

/// One segment followed across the frames of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Tube {
    pub class_id: u16,
    pub instance_id: u16,
    /// One mask per window frame; empty where the segment is absent.
    pub masks: Vec<InstanceMask>,
}

impl Tube {
    pub fn area(&self) -> usize {
        self.masks.iter().map(InstanceMask::area).sum()
    }
}

/// One tube per `(class_id, instance_id)` present in `frames[start..start+len]`.
/// Stuff classes give a single tube with instance id 0; void pixels are left out.
pub fn build_tubes(frames: &[SegmentationMap], start: usize, len: usize) -> Result<Vec<Tube>> {
    let window = frames
        .get(start..start + len)
        .ok_or(Error::LengthMismatch {
            expected: start + len,
            actual: frames.len(),
        })?;
    let Some(first) = window.first() else {
        return Ok(vec![]);
    };
    let (w, h) = first.dims();
    let mut tubes: BTreeMap<Label, Vec<InstanceMask>> = BTreeMap::new();
    for (f, frame) in window.iter().enumerate() {
        check_dims((w, h), frame.dims())?;
        for (i, &label) in frame.labels().iter().enumerate() {
            if frame.is_void(label) {
                continue;
            }
            tubes
                .entry(label)
                .or_insert_with(|| {
                    (0..len)
                        .map(|_| InstanceMask::empty(w, h, label.class_id, label.instance_id))
                        .collect()
                })[f]
                .set(i % w, i / w);
        }
    }
    Ok(tubes
        .into_iter()
        .map(|(label, masks)| Tube {
            class_id: label.class_id,
            instance_id: label.instance_id,
            masks,
        })
        .collect())
}

/// Intersection over union of two tubes, counted jointly over all frames.
pub fn tube_iou(a: &Tube, b: &Tube) -> Result<f64> {
    if a.class_id != b.class_id {
        return Err(Error::ShapeMismatch(format!(
            "tubes of classes {} and {}",
            a.class_id, b.class_id
        )));
    }
    if a.masks.len() != b.masks.len() {
        return Err(Error::ShapeMismatch(format!(
            "tubes spanning {} and {} frames",
            a.masks.len(),
            b.masks.len()
        )));
    }
    let mut inter = 0;
    for (x, y) in a.masks.iter().zip(&b.masks) {
        inter += x.intersection(y)?;
    }
    let union = a.area() + b.area() - inter;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// Accumulated matching statistics of one class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class_id: u16,
    pub name: String,
    pub is_thing: bool,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub iou_sum: f64,
}

impl ClassStats {
    pub fn is_present(&self) -> bool {
        self.tp + self.fp + self.fn_ > 0
    }

    /// `Σ IoU / (TP + FP/2 + FN/2)`, or `None` for a class never seen.
    pub fn score(&self) -> Option<f64> {
        self.is_present()
            .then(|| self.iou_sum / (self.tp as f64 + 0.5 * self.fp as f64 + 0.5 * self.fn_ as f64))
    }
}

/// A predicted sequence paired with its ground truth.
#[derive(Debug, Clone, Copy)]
pub struct SequencePair<'a> {
    pub pred: &'a [SegmentationMap],
    pub gt: &'a [SegmentationMap],
}

/// Per-class statistics for window length `len`, accumulated over every
/// window start of every sequence.
pub fn vpq_window(pred: &[SegmentationMap], gt: &[SegmentationMap], len: usize) -> Result<Vec<ClassStats>> {
    vpq_window_multi(&[SequencePair { pred, gt }], len)
}

pub fn vpq_window_multi(sequences: &[SequencePair<'_>], len: usize) -> Result<Vec<ClassStats>> {
    if len == 0 {
        return Err(Error::InvalidConfig("window length must be at least 1".into()));
    }
    let mut stats: BTreeMap<u16, ClassStats> = BTreeMap::new();
    for seq in sequences {
        if seq.pred.len() != seq.gt.len() {
            return Err(Error::LengthMismatch {
                expected: seq.gt.len(),
                actual: seq.pred.len(),
            });
        }
        if seq.gt.len() < len {
            return Err(Error::InvalidConfig(format!(
                "window of {len} frames on a {}-frame sequence",
                seq.gt.len()
            )));
        }
        for map in seq.gt.iter().chain(seq.pred) {
            check_dims(seq.gt[0].dims(), map.dims())?;
            for cat in map.categories() {
                stats.entry(cat.class_id).or_insert_with(|| class_entry(cat));
            }
        }
        for start in 0..=seq.gt.len() - len {
            match_window(
                &seq.pred[start..start + len],
                &seq.gt[start..start + len],
                &mut stats,
            )?;
        }
    }
    Ok(stats.into_values().collect())
}

fn class_entry(cat: &Category) -> ClassStats {
    ClassStats {
        class_id: cat.class_id,
        name: cat.name.clone(),
        is_thing: cat.is_thing,
        ..ClassStats::default()
    }
}

fn match_window(
    pred: &[SegmentationMap],
    gt: &[SegmentationMap],
    stats: &mut BTreeMap<u16, ClassStats>,
) -> Result<()> {
    let mut gt_area: HashMap<Label, u64> = HashMap::new();
    // pred areas exclude ground-truth void pixels; the void overlap is kept apart
    let mut pred_area: HashMap<Label, u64> = HashMap::new();
    let mut pred_void: HashMap<Label, u64> = HashMap::new();
    let mut inter: HashMap<(Label, Label), u64> = HashMap::new();

    for (p_map, g_map) in pred.iter().zip(gt) {
        for (&p, &g) in p_map.labels().iter().zip(g_map.labels()) {
            let p_void = p_map.is_void(p);
            if g_map.is_void(g) {
                if !p_void {
                    *pred_void.entry(p).or_default() += 1;
                }
                continue;
            }
            *gt_area.entry(g).or_default() += 1;
            if p_void {
                continue;
            }
            *pred_area.entry(p).or_default() += 1;
            if p.class_id == g.class_id {
                *inter.entry((g, p)).or_default() += 1;
            }
        }
    }

    let mut gt_matched: HashMap<Label, ()> = HashMap::new();
    let mut pred_matched: HashMap<Label, ()> = HashMap::new();
    let mut keys: Vec<_> = inter.keys().copied().collect();
    keys.sort();
    for (g, p) in keys {
        let i = inter[&(g, p)];
        let union = gt_area[&g] + pred_area[&p] - i;
        let iou = i as f64 / union as f64;
        if iou <= MATCH_IOU {
            continue;
        }
        if gt_matched.insert(g, ()).is_some() || pred_matched.insert(p, ()).is_some() {
            return Err(Error::Invariant(format!(
                "segments {g:?}/{p:?} matched twice above IoU 0.5"
            )));
        }
        let s = stats.get_mut(&g.class_id).ok_or(Error::UnknownClassId(g.class_id))?;
        s.tp += 1;
        s.iou_sum += iou;
    }
    for g in gt_area.keys().filter(|g| !gt_matched.contains_key(g)) {
        stats
            .get_mut(&g.class_id)
            .ok_or(Error::UnknownClassId(g.class_id))?
            .fn_ += 1;
    }
    for (p, &area) in &pred_area {
        if pred_matched.contains_key(p) {
            continue;
        }
        let void = pred_void.get(p).copied().unwrap_or(0);
        // mostly-void predictions are ignored rather than counted as false
        if void * 2 > area + void {
            continue;
        }
        stats
            .get_mut(&p.class_id)
            .ok_or(Error::UnknownClassId(p.class_id))?
            .fp += 1;
    }
    Ok(())
}

/// Scores of one window length, as percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    /// Window length in evaluated frames.
    pub window: usize,
    /// Equivalent temporal distance in annotation-stride frames.
    pub k: usize,
    pub vpq: Option<f64>,
    pub vpq_th: Option<f64>,
    pub vpq_st: Option<f64>,
    pub classes: Vec<ClassStats>,
}

fn mean_score<'a>(classes: impl Iterator<Item = &'a ClassStats>) -> Option<f64> {
    let scores: Vec<f64> = classes.filter_map(ClassStats::score).collect();
    (!scores.is_empty()).then(|| 100.0 * scores.iter().sum::<f64>() / scores.len() as f64)
}

impl WindowScore {
    pub fn from_stats(window: usize, classes: Vec<ClassStats>) -> Self {
        Self {
            window,
            k: ANNOTATION_STRIDE * (window - 1),
            vpq: mean_score(classes.iter()),
            vpq_th: mean_score(classes.iter().filter(|c| c.is_thing)),
            vpq_st: mean_score(classes.iter().filter(|c| !c.is_thing)),
            classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VpqReport {
    pub windows: Vec<WindowScore>,
    /// Mean over window lengths.
    pub vpq: Option<f64>,
    pub vpq_th: Option<f64>,
    pub vpq_st: Option<f64>,
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"))
}

impl VpqReport {
    pub fn from_windows(windows: Vec<WindowScore>) -> Self {
        Self {
            vpq: mean_opt(windows.iter().map(|w| w.vpq)),
            vpq_th: mean_opt(windows.iter().map(|w| w.vpq_th)),
            vpq_st: mean_opt(windows.iter().map(|w| w.vpq_st)),
            windows,
        }
    }

    pub fn window(&self, len: usize) -> Option<&WindowScore> {
        self.windows.iter().find(|w| w.window == len)
    }

    /// Aligned text table, one `VPQ / VPQ^Th / VPQ^St` cell per window.
    pub fn to_table(&self) -> String {
        let mut header = vec!["".to_string()];
        let mut row = vec!["VPQ / VPQ^Th / VPQ^St".to_string()];
        for w in &self.windows {
            header.push(format!("k={} (L={})", w.k, w.window));
            row.push(format!("{} / {} / {}", cell(w.vpq), cell(w.vpq_th), cell(w.vpq_st)));
        }
        header.push("mean".into());
        row.push(format!(
            "{} / {} / {}",
            cell(self.vpq),
            cell(self.vpq_th),
            cell(self.vpq_st)
        ));
        let widths: Vec<usize> = header
            .iter()
            .zip(&row)
            .map(|(a, b)| a.len().max(b.len()))
            .collect();
        let mut out = String::new();
        for line in [&header, &row] {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join(" | ").trim_end());
        }
        out
    }
}

pub fn vpq_report(pred: &[SegmentationMap], gt: &[SegmentationMap], windows: &[usize]) -> Result<VpqReport> {
    vpq_report_multi(&[SequencePair { pred, gt }], windows)
}

pub fn vpq_report_multi(sequences: &[SequencePair<'_>], windows: &[usize]) -> Result<VpqReport> {
    let scores = windows
        .iter()
        .map(|&len| Ok(WindowScore::from_stats(len, vpq_window_multi(sequences, len)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(VpqReport::from_windows(scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cats() -> Vec<Category> {
        vec![Category::stuff(1, "road"), Category::thing(10, "car")]
    }

    fn map(w: usize, h: usize, labels: &[(u16, u16)]) -> SegmentationMap {
        SegmentationMap::new(
            w,
            h,
            labels.iter().map(|&(c, i)| Label::new(c, i)).collect(),
            cats(),
        )
        .unwrap()
    }

    #[test]
    fn identical_tubes_have_iou_one() {
        let frames = vec![
            map(2, 2, &[(10, 1), (1, 0), (1, 0), (10, 2)]),
            map(2, 2, &[(10, 1), (10, 1), (1, 0), (10, 2)]),
        ];
        let tubes = build_tubes(&frames, 0, 2).unwrap();
        assert_eq!(tubes.len(), 3);
        for t in &tubes {
            assert_eq!(tube_iou(t, t).unwrap(), 1.0);
        }
        assert_eq!(tubes[1].area(), 3);
    }

    #[test]
    fn half_overlap_in_one_frame() {
        // A = 4 pixels per frame; frame 0 overlaps in 2 pixels, frame 1 disjoint
        let w = 8;
        let h = 1;
        let a = |_f: usize| InstanceMask::from_pixels(w, h, 10, 1, (0..4).map(|x| (x, 0)));
        let b = |f: usize| {
            let xs: Vec<usize> = if f == 0 { (2..6).collect() } else { (4..8).collect() };
            InstanceMask::from_pixels(w, h, 10, 2, xs.into_iter().map(|x| (x, 0)))
        };
        let ta = Tube {
            class_id: 10,
            instance_id: 1,
            masks: vec![a(0), a(1)],
        };
        let tb = Tube {
            class_id: 10,
            instance_id: 2,
            masks: vec![b(0), b(1)],
        };
        // (A/2) / (2A + 2A - A/2) with A = 4
        assert_eq!(tube_iou(&ta, &tb).unwrap(), 2.0 / 14.0);
    }

    #[test]
    fn disjoint_tubes() {
        let frames = vec![map(2, 1, &[(10, 1), (10, 2)])];
        let t = build_tubes(&frames, 0, 1).unwrap();
        assert_eq!(tube_iou(&t[0], &t[1]).unwrap(), 0.0);
    }

    #[test]
    fn perfect_prediction_scores_100() {
        let gt = vec![
            map(3, 1, &[(10, 1), (10, 2), (1, 0)]),
            map(3, 1, &[(10, 2), (10, 1), (1, 0)]),
            map(3, 1, &[(10, 1), (1, 0), (10, 2)]),
        ];
        let report = vpq_report(&gt, &gt, &[1, 2, 3]).unwrap();
        for w in &report.windows {
            assert_eq!(w.vpq, Some(100.0));
            assert_eq!(w.vpq_th, Some(100.0));
            assert_eq!(w.vpq_st, Some(100.0));
        }
        assert_eq!(report.vpq, Some(100.0));
    }

    #[test]
    fn split_segment_scores_zero() {
        // one GT car of 4 pixels; prediction splits it into two halves
        let gt = vec![map(4, 1, &[(10, 1); 4])];
        let pred = vec![map(4, 1, &[(10, 1), (10, 1), (10, 2), (10, 2)])];
        let stats = vpq_window(&pred, &gt, 1).unwrap();
        let car = stats.iter().find(|s| s.class_id == 10).unwrap();
        assert_eq!((car.tp, car.fp, car.fn_), (0, 2, 1));
        assert_eq!(car.score(), Some(0.0));
        let road = stats.iter().find(|s| s.class_id == 1).unwrap();
        assert_eq!(road.score(), None);
    }

    #[test]
    fn id_switch_breaks_long_windows_only() {
        let gt = vec![map(2, 1, &[(10, 1), (1, 0)]); 2];
        let pred = vec![map(2, 1, &[(10, 1), (1, 0)]), map(2, 1, &[(10, 7), (1, 0)])];
        let r = vpq_report(&pred, &gt, &[1, 2]).unwrap();
        assert_eq!(r.window(1).unwrap().vpq_th, Some(100.0));
        // window of 2: gt tube area 2, each pred tube overlaps 1 -> IoU 0.5, no match
        assert_eq!(r.window(2).unwrap().vpq_th, Some(0.0));
    }

    #[test]
    fn predicted_void_is_not_a_segment() {
        let gt = vec![map(4, 1, &[(10, 1), (10, 1), (10, 1), (1, 0)])];
        let pred = vec![map(4, 1, &[(10, 1), (10, 1), (10, 0), (1, 0)])];
        let stats = vpq_window(&pred, &gt, 1).unwrap();
        let car = stats.iter().find(|s| s.class_id == 10).unwrap();
        assert_eq!((car.tp, car.fp, car.fn_), (1, 0, 0));
        assert!((car.iou_sum - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn table_mirrors_cell_format() {
        let gt = vec![map(2, 1, &[(10, 1), (1, 0)]); 2];
        let t = vpq_report(&gt, &gt, &[1, 2]).unwrap().to_table();
        assert!(t.contains("k=0 (L=1)"));
        assert!(t.contains("k=5 (L=2)"));
        assert!(t.contains("100.0 / 100.0 / 100.0"));
    }

    #[test]
    fn short_sequences_are_rejected() {
        let gt = vec![map(2, 1, &[(10, 1), (1, 0)])];
        assert!(vpq_window(&gt, &gt, 2).is_err());
        assert!(vpq_window(&gt, &gt[..0], 1).is_err());
    }
}
