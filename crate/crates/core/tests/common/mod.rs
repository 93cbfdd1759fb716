//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use hybridtrack::instance::{pair_loss, EmbeddingHeadParams, MatchOptions, MatchSupervision};
use hybridtrack::mask::{Category, InstanceMask, Label, SegmentationMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type PixelSet = BTreeSet<(usize, usize)>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn pixel_set(m: &InstanceMask) -> PixelSet {
    let mut s = PixelSet::new();
    for y in 0..m.height() {
        for x in 0..m.width() {
            if m.contains(x, y) {
                s.insert((x, y));
            }
        }
    }
    s
}

pub fn set_dice(a: &PixelSet, b: &PixelSet) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    2.0 * a.intersection(b).count() as f64 / (a.len() + b.len()) as f64
}

fn round_away(v: f64) -> f64 {
    if v >= 0.0 {
        (v + 0.5).floor()
    } else {
        -((-v + 0.5).floor())
    }
}

/// Forward warp written over pixel sets.
pub fn set_warp(s: &PixelSet, flow: &[[f32; 2]], w: usize, h: usize) -> PixelSet {
    s.iter()
        .filter_map(|&(x, y)| {
            let [u, v] = flow[y * w + x];
            let tx = round_away(x as f64 + u as f64);
            let ty = round_away(y as f64 + v as f64);
            (tx >= 0.0 && ty >= 0.0 && tx < w as f64 && ty < h as f64).then_some((tx as usize, ty as usize))
        })
        .collect()
}

/// Dice matrix computed from pixel sets alone.
pub fn pixel_correlation_oracle(
    prev: &[InstanceMask],
    flow: &[[f32; 2]],
    cur: &[InstanceMask],
    gated: bool,
) -> Vec<Vec<f64>> {
    prev.iter()
        .map(|p| {
            let warped = set_warp(&pixel_set(p), flow, p.width(), p.height());
            cur.iter()
                .map(|c| {
                    if gated && c.class_id() != p.class_id() {
                        0.0
                    } else {
                        set_dice(&warped, &pixel_set(c))
                    }
                })
                .collect()
        })
        .collect()
}

pub fn random_mask(r: &mut ChaCha8Rng, w: usize, h: usize, density: f64, class_id: u16, id: u16) -> InstanceMask {
    let bits = (0..w * h).map(|_| r.random_bool(density)).collect();
    InstanceMask::from_bits(w, h, class_id, id, bits).unwrap()
}

/// A random blob: a filled rectangle with a few pixels knocked out.
pub fn random_blob(r: &mut ChaCha8Rng, w: usize, h: usize, class_id: u16, id: u16) -> InstanceMask {
    let x0 = r.random_range(0..w - 2);
    let y0 = r.random_range(0..h - 2);
    let x1 = r.random_range(x0 + 1..w);
    let y1 = r.random_range(y0 + 1..h);
    let pixels: Vec<(usize, usize)> = (y0..=y1)
        .flat_map(|y| (x0..=x1).map(move |x| (x, y)))
        .filter(|_| r.random_bool(0.9))
        .collect();
    InstanceMask::from_pixels(w, h, class_id, id, pixels)
}

pub fn small_categories() -> Vec<Category> {
    vec![
        Category::stuff(1, "road"),
        Category::stuff(2, "sky"),
        Category::thing(10, "car"),
        Category::thing(11, "person"),
    ]
}

/// A random map with rectangles of stuff and thing labels painted in order.
pub fn random_map(r: &mut ChaCha8Rng, w: usize, h: usize, n_rects: usize, max_id: u16) -> SegmentationMap {
    let mut labels = vec![Label::new(1, 0); w * h];
    for _ in 0..n_rects {
        let label = match r.random_range(0..4) {
            0 => Label::new(2, 0),
            1 => Label::new(1, 0),
            2 => Label::new(10, r.random_range(0..=max_id)),
            _ => Label::new(11, r.random_range(0..=max_id)),
        };
        let x0 = r.random_range(0..w);
        let y0 = r.random_range(0..h);
        let x1 = r.random_range(x0..w);
        let y1 = r.random_range(y0..h);
        for y in y0..=y1 {
            for x in x0..=x1 {
                labels[y * w + x] = label;
            }
        }
    }
    SegmentationMap::new(w, h, labels, small_categories()).unwrap()
}

/// Per-class `(tp, fp, fn, iou_sum)` of single-image panoptic quality.
pub fn image_pq_oracle(pred: &SegmentationMap, gt: &SegmentationMap) -> BTreeMap<u16, (usize, usize, usize, f64)> {
    let segments = |m: &SegmentationMap| -> BTreeMap<Label, BTreeSet<usize>> {
        let mut out: BTreeMap<Label, BTreeSet<usize>> = BTreeMap::new();
        for (k, &l) in m.labels().iter().enumerate() {
            if !m.is_void(l) {
                out.entry(l).or_default().insert(k);
            }
        }
        out
    };
    let void: BTreeSet<usize> = gt
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &l)| gt.is_void(l))
        .map(|(k, _)| k)
        .collect();
    let gs = segments(gt);
    let ps = segments(pred);
    let mut stats: BTreeMap<u16, (usize, usize, usize, f64)> = BTreeMap::new();
    for c in gt.categories().iter().chain(pred.categories()) {
        stats.entry(c.class_id).or_default();
    }
    let mut g_hit = BTreeSet::new();
    let mut p_hit = BTreeSet::new();
    for (g, gpix) in &gs {
        for (p, ppix) in &ps {
            if g.class_id != p.class_id {
                continue;
            }
            let inter = gpix.intersection(ppix).count();
            if inter == 0 {
                continue;
            }
            let p_valid = ppix.difference(&void).count();
            let iou = inter as f64 / (gpix.len() + p_valid - inter) as f64;
            if iou > 0.5 {
                g_hit.insert(*g);
                p_hit.insert(*p);
                let s = stats.get_mut(&g.class_id).unwrap();
                s.0 += 1;
                s.3 += iou;
            }
        }
    }
    for g in gs.keys().filter(|g| !g_hit.contains(*g)) {
        stats.get_mut(&g.class_id).unwrap().2 += 1;
    }
    for (p, ppix) in &ps {
        if p_hit.contains(p) {
            continue;
        }
        let in_void = ppix.intersection(&void).count();
        if in_void * 2 > ppix.len() {
            continue;
        }
        stats.get_mut(&p.class_id).unwrap().1 += 1;
    }
    stats
}

/// Largest relative gap between the analytic gradient and central
/// differences of [`pair_loss`].
pub fn max_fd_error(
    prev: &[Vec<f64>],
    cur: &[Vec<f64>],
    params: &EmbeddingHeadParams,
    sup: &MatchSupervision,
    opts: MatchOptions,
    analytic: &EmbeddingHeadParams,
    h: f64,
) -> f64 {
    let grads: Vec<f64> = analytic.values().copied().collect();
    let mut worst: f64 = 0.0;
    for (k, &g) in grads.iter().enumerate() {
        let mut plus = params.clone();
        *plus.values_mut().nth(k).unwrap() += h;
        let mut minus = params.clone();
        *minus.values_mut().nth(k).unwrap() -= h;
        let lp = pair_loss(prev, cur, &plus, sup, opts).unwrap();
        let lm = pair_loss(prev, cur, &minus, sup, opts).unwrap();
        let numeric = (lp - lm) / (2.0 * h);
        let scale = g.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((g - numeric).abs() / scale);
    }
    worst
}

/// A supervised toy with 2–4 instances per frame and continuous inputs.
pub fn gradient_toy(seed: u64, d_in: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, MatchSupervision) {
    let mut r = rng(seed);
    let m = r.random_range(2..=4);
    let n = r.random_range(2..=4);
    let mut vecs = |k: usize| -> Vec<Vec<f64>> {
        (0..k)
            .map(|_| (0..d_in).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect()
    };
    let prev = vecs(m);
    let cur = vecs(n);
    let mut cols: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    cols.shuffle(&mut r);
    let pairs: Vec<(usize, usize)> = (0..m.min(n)).map(|i| (i, cols[i])).collect();
    let sup = MatchSupervision::new(pairs, m, n).unwrap();
    (prev, cur, sup)
}
