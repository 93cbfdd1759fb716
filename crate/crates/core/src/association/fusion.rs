use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationMatrix, MatrixKind};
use crate::error::{Error, Result};

/// Per-cell affine combination of the instance and pixel matrices, the
/// whole expressive class of a 1x1 convolution over two score channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub w_instance: f64,
    pub w_pixel: f64,
    pub bias: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            w_instance: 0.5,
            w_pixel: 0.5,
            bias: 0.0,
        }
    }
}

impl FusionWeights {
    pub fn new(w_instance: f64, w_pixel: f64, bias: f64) -> Self {
        Self {
            w_instance,
            w_pixel,
            bias,
        }
    }

    /// Non-negative weights summing to one with zero bias.
    pub fn is_convex(&self) -> bool {
        self.w_instance >= 0.0
            && self.w_pixel >= 0.0
            && (self.w_instance + self.w_pixel - 1.0).abs() < 1e-12
            && self.bias == 0.0
    }

    pub fn apply(&self, instance: f64, pixel: f64) -> f64 {
        self.w_instance * instance + self.w_pixel * pixel + self.bias
    }
}

pub fn fuse(
    inst: &CorrelationMatrix,
    pix: &CorrelationMatrix,
    w: &FusionWeights,
) -> Result<CorrelationMatrix> {
    if inst.rows() != pix.rows() || inst.cols() != pix.cols() {
        return Err(Error::ShapeMismatch(format!(
            "instance matrix {}x{} vs pixel matrix {}x{}",
            inst.rows(),
            inst.cols(),
            pix.rows(),
            pix.cols()
        )));
    }
    if inst.row_ids() != pix.row_ids() || inst.col_ids() != pix.col_ids() {
        return Err(Error::IdMisalignment);
    }
    let scores = inst
        .scores()
        .iter()
        .zip(pix.scores())
        .map(|(&a, &b)| w.apply(a, b))
        .collect();
    CorrelationMatrix::new(
        MatrixKind::Fused,
        inst.row_ids().to_vec(),
        inst.col_ids().to_vec(),
        scores,
    )
}

/// One training cell for the fusion fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionSample {
    pub instance: f64,
    pub pixel: f64,
    /// 1 for a true correspondence, 0 otherwise.
    pub target: f64,
}

/// Every cell of an aligned matrix pair, labelled by the true `(row, col)`
/// correspondences.
pub fn fusion_samples(
    inst: &CorrelationMatrix,
    pix: &CorrelationMatrix,
    truth: &[(usize, usize)],
) -> Result<Vec<FusionSample>> {
    fuse(inst, pix, &FusionWeights::default())?;
    let mut out = Vec::with_capacity(inst.rows() * inst.cols());
    for i in 0..inst.rows() {
        for j in 0..inst.cols() {
            out.push(FusionSample {
                instance: inst.get(i, j),
                pixel: pix.get(i, j),
                target: if truth.contains(&(i, j)) { 1.0 } else { 0.0 },
            });
        }
    }
    Ok(out)
}

/// Least-squares fit of `(w_instance, w_pixel, bias)` to the sample targets.
pub fn fit_fusion_weights(samples: &[FusionSample]) -> Result<FusionWeights> {
    if samples.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "fusion fit needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    let a = DMatrix::from_fn(samples.len(), 3, |r, c| match c {
        0 => samples[r].instance,
        1 => samples[r].pixel,
        _ => 1.0,
    });
    let b = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.target));
    let x = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Invariant(format!("fusion least squares: {e}")))?;
    Ok(FusionWeights::new(x[0], x[1], x[2]))
}
