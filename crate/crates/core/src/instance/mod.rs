//! Appearance-based correlation: RoI masks are embedded by a two-layer head
//! and matched through a row softmax over embedding dot products.

mod checkpoint;
mod dml;
mod head;
mod train;

use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationMatrix, MatrixKind};
use crate::error::Result;
use crate::mask::{crop_scale_pad_anchored, InstanceMask, RoiAnchor};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint};
pub use dml::{
    correlate, expected_target, loss_gradients, match_softmax, matching_loss, pair_loss,
    EmbeddingSet, LossKind, MatchDistribution, MatchOptions, MatchSupervision,
};
pub use head::{embed, embed_values, EmbeddingHeadParams};
pub use train::{
    batch_gradient, row_argmax_accuracy, train, train_from, TrainConfig, TrainOutcome,
    TrainingPair,
};

/// RoI geometry fed to the embedding head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiConfig {
    pub height: usize,
    pub width: usize,
    pub anchor: RoiAnchor,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            height: 32,
            width: 64,
            anchor: RoiAnchor::TopLeft,
        }
    }
}

impl RoiConfig {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            anchor: RoiAnchor::TopLeft,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened RoI of a mask.
    pub fn roi_values(&self, mask: &InstanceMask) -> Result<Vec<f64>> {
        Ok(crop_scale_pad_anchored(mask, self.height, self.width, self.anchor)?.into_values())
    }
}

/// A trained embedding head bundled with its RoI geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceTracker {
    pub params: EmbeddingHeadParams,
    pub roi: RoiConfig,
    pub cosine: bool,
}

impl InstanceTracker {
    pub fn new(params: EmbeddingHeadParams, roi: RoiConfig, cosine: bool) -> Result<Self> {
        params.check_input(roi.len())?;
        Ok(Self {
            params,
            roi,
            cosine,
        })
    }

    pub fn embed_masks(&self, masks: &[InstanceMask]) -> Result<EmbeddingSet> {
        let vectors = masks
            .iter()
            .map(|m| embed_values(&self.roi.roi_values(m)?, &self.params))
            .collect::<Result<Vec<_>>>()?;
        let set = EmbeddingSet::new(vectors, masks.iter().map(|m| m.instance_id()).collect())?;
        Ok(if self.cosine { set.normalized() } else { set })
    }

    /// Row-softmax similarity of two embedded frames.
    pub fn correlation(&self, prev: &EmbeddingSet, cur: &EmbeddingSet) -> Result<CorrelationMatrix> {
        embedding_correlation(prev, cur)
    }
}

/// Row-softmax of embedding dot products as an instance-kind matrix.
pub fn embedding_correlation(prev: &EmbeddingSet, cur: &EmbeddingSet) -> Result<CorrelationMatrix> {
    let dist = match_softmax(&correlate(prev, cur)?);
    CorrelationMatrix::new(
        MatrixKind::Instance,
        prev.instance_ids.clone(),
        cur.instance_ids.clone(),
        dist.probs.concat(),
    )
}

/// Embeds both frames' masks, correlates and row-normalises.
pub fn instance_correlation(
    prev: &[InstanceMask],
    cur: &[InstanceMask],
    tracker: &InstanceTracker,
) -> Result<CorrelationMatrix> {
    tracker.correlation(&tracker.embed_masks(prev)?, &tracker.embed_masks(cur)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::mask::RoiMask;

    #[test]
    fn zero_roi_and_biases_embed_to_zero() {
        let mut p = EmbeddingHeadParams::init(8, 4, 3, 1).unwrap();
        p.b1.iter_mut().for_each(|b| *b = 0.0);
        p.b2.iter_mut().for_each(|b| *b = 0.0);
        let roi = RoiMask::new(2, 4, vec![0.0; 8]).unwrap();
        assert_eq!(embed(&roi, &p).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_head_passes_binary_roi_through() {
        let d = 6;
        let mut p = EmbeddingHeadParams::zeros(d, d, d);
        for k in 0..d {
            p.w1[k * d + k] = 1.0;
            p.w2[k * d + k] = 1.0;
        }
        let values = vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let roi = RoiMask::new(2, 3, values.clone()).unwrap();
        assert_eq!(embed(&roi, &p).unwrap(), values);
    }

    #[test]
    fn embed_matches_scalar_recomputation() {
        use rand::{Rng, SeedableRng};
        let (d_in, d_h, d_e) = (12, 5, 4);
        let p = EmbeddingHeadParams::init(d_in, d_h, d_e, 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..d_in).map(|_| rng.random_range(0.0..1.0)).collect();
        let got = embed_values(&x, &p).unwrap();
        for (e, &g) in got.iter().enumerate() {
            let mut out = p.b2[e];
            for h in 0..d_h {
                let mut pre = p.b1[h];
                for (k, xk) in x.iter().enumerate() {
                    pre += p.w1[k * d_h + h] * xk;
                }
                out += p.w2[h * d_e + e] * if pre > 0.0 { pre } else { 0.0 };
            }
            assert!((g - out).abs() < 1e-12);
        }
    }

    #[test]
    fn homogeneous_without_biases() {
        let mut p = EmbeddingHeadParams::init(10, 6, 4, 8).unwrap();
        p.b1.iter_mut().for_each(|b| *b = 0.0);
        p.b2.iter_mut().for_each(|b| *b = 0.0);
        let x: Vec<f64> = (0..10).map(|k| (k % 3) as f64 * 0.25).collect();
        let x2: Vec<f64> = x.iter().map(|v| v * 2.0).collect();
        let a = embed_values(&x, &p).unwrap();
        let b = embed_values(&x2, &p).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert_eq!(2.0 * u, *v);
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = EmbeddingHeadParams::init(8, 4, 3, 1).unwrap();
        let roi = RoiMask::new(3, 3, vec![0.0; 9]).unwrap();
        assert!(matches!(embed(&roi, &p), Err(Error::ShapeMismatch(_))));
        assert!(InstanceTracker::new(p, RoiConfig::new(3, 3), false).is_err());
    }

    #[test]
    fn instance_rows_are_stochastic() {
        let roi = RoiConfig::new(4, 8);
        let t = InstanceTracker::new(
            EmbeddingHeadParams::init(roi.len(), 8, 8, 2).unwrap(),
            roi,
            false,
        )
        .unwrap();
        let a = InstanceMask::from_pixels(10, 10, 10, 1, [(1, 1), (2, 1), (2, 2)]);
        let b = InstanceMask::from_pixels(10, 10, 10, 2, [(5, 5), (5, 6), (5, 7), (6, 7)]);
        let m = instance_correlation(&[a.clone(), b.clone()], &[b, a], &t).unwrap();
        assert_eq!(m.kind(), MatrixKind::Instance);
        for i in 0..2 {
            let s: f64 = m.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.col_ids(), &[2, 1]);
    }
}
