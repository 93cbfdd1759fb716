//! The two-layer embedding head and its parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mask::RoiMask;

/// Weights of `v = W2ᵀ relu(W1ᵀ x + b1) + b2`.
///
/// `w1` is `d_in x d_hidden` and `w2` is `d_hidden x d_embed`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingHeadParams {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_embed: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl EmbeddingHeadParams {
    pub fn zeros(d_in: usize, d_hidden: usize, d_embed: usize) -> Self {
        Self {
            d_in,
            d_hidden,
            d_embed,
            w1: vec![0.0; d_in * d_hidden],
            b1: vec![0.0; d_hidden],
            w2: vec![0.0; d_hidden * d_embed],
            b2: vec![0.0; d_embed],
        }
    }

    /// Each layer uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(d_in: usize, d_hidden: usize, d_embed: usize, seed: u64) -> Result<Self> {
        if d_in == 0 || d_hidden == 0 || d_embed == 0 {
            return Err(Error::InvalidConfig(format!(
                "embedding dims must be positive, got {d_in}/{d_hidden}/{d_embed}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |n: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
        };
        let w1 = fill(d_in * d_hidden, d_in);
        let b1 = fill(d_hidden, d_in);
        let w2 = fill(d_hidden * d_embed, d_hidden);
        let b2 = fill(d_embed, d_hidden);
        Ok(Self {
            d_in,
            d_hidden,
            d_embed,
            w1,
            b1,
            w2,
            b2,
        })
    }

    /// Same shape, all zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.d_in, self.d_hidden, self.d_embed)
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All entries in the order `w1, b1, w2, b2`.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(&mut self.b1)
            .chain(&mut self.w2)
            .chain(&mut self.b2)
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += scale * b;
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values().zip(other.values()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub(crate) fn check_input(&self, len: usize) -> Result<()> {
        if len != self.d_in {
            return Err(Error::ShapeMismatch(format!(
                "embedding input has {len} values, head expects {}",
                self.d_in
            )));
        }
        Ok(())
    }
}

/// Intermediate values of one forward pass, kept for backprop.
pub(crate) struct Forward {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

pub(crate) fn forward(x: &[f64], p: &EmbeddingHeadParams) -> Forward {
    let mut pre = p.b1.clone();
    for (k, &xk) in x.iter().enumerate() {
        if xk == 0.0 {
            continue;
        }
        let row = &p.w1[k * p.d_hidden..(k + 1) * p.d_hidden];
        for (acc, w) in pre.iter_mut().zip(row) {
            *acc += xk * w;
        }
    }
    let hidden: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
    let mut out = p.b2.clone();
    for (h, &hv) in hidden.iter().enumerate() {
        if hv == 0.0 {
            continue;
        }
        let row = &p.w2[h * p.d_embed..(h + 1) * p.d_embed];
        for (acc, w) in out.iter_mut().zip(row) {
            *acc += hv * w;
        }
    }
    Forward { pre, hidden, out }
}

/// Accumulates the parameter gradient of `dout · v(x)` into `grads`.
pub(crate) fn backward(
    x: &[f64],
    fwd: &Forward,
    dout: &[f64],
    p: &EmbeddingHeadParams,
    grads: &mut EmbeddingHeadParams,
) {
    for (g, d) in grads.b2.iter_mut().zip(dout) {
        *g += d;
    }
    let mut dpre = vec![0.0; p.d_hidden];
    for (h, dp) in dpre.iter_mut().enumerate() {
        let hv = fwd.hidden[h];
        let w_row = &p.w2[h * p.d_embed..(h + 1) * p.d_embed];
        if hv != 0.0 {
            let g_row = &mut grads.w2[h * p.d_embed..(h + 1) * p.d_embed];
            for (g, d) in g_row.iter_mut().zip(dout) {
                *g += hv * d;
            }
        }
        if fwd.pre[h] > 0.0 {
            *dp = w_row.iter().zip(dout).map(|(w, d)| w * d).sum();
        }
    }
    for (g, d) in grads.b1.iter_mut().zip(&dpre) {
        *g += d;
    }
    for (k, &xk) in x.iter().enumerate() {
        if xk == 0.0 {
            continue;
        }
        let g_row = &mut grads.w1[k * p.d_hidden..(k + 1) * p.d_hidden];
        for (g, d) in g_row.iter_mut().zip(&dpre) {
            *g += xk * d;
        }
    }
}

/// Embeds a flattened RoI.
pub fn embed_values(x: &[f64], params: &EmbeddingHeadParams) -> Result<Vec<f64>> {
    params.check_input(x.len())?;
    Ok(forward(x, params).out)
}

pub fn embed(roi: &RoiMask, params: &EmbeddingHeadParams) -> Result<Vec<f64>> {
    embed_values(roi.values(), params)
}
