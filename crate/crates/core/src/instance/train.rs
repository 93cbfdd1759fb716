//! Gradient-descent training of the embedding head on supervised frame pairs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dml::{correlate, loss_gradients, EmbeddingSet, MatchOptions, MatchSupervision};
use super::head::{embed_values, EmbeddingHeadParams};
use crate::error::{Error, Result};

/// Flattened RoIs of two frames plus their ground-truth correspondences.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub prev: Vec<Vec<f64>>,
    pub cur: Vec<Vec<f64>>,
    pub supervision: MatchSupervision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Pairs per step; `None` means full batch.
    pub batch_size: Option<usize>,
    pub d_hidden: usize,
    pub d_embed: usize,
    pub options: MatchOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            epochs: 100,
            seed: 0,
            batch_size: None,
            d_hidden: 64,
            d_embed: 64,
            options: MatchOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EmbeddingHeadParams,
    /// Mean training loss seen during each epoch.
    pub loss_trace: Vec<f64>,
}

/// Mean loss and gradient over `batch`, reduced in slice order so the result
/// does not depend on thread scheduling.
pub fn batch_gradient(
    batch: &[&TrainingPair],
    params: &EmbeddingHeadParams,
    opts: MatchOptions,
) -> Result<(f64, EmbeddingHeadParams)> {
    let parts: Vec<(f64, EmbeddingHeadParams)> = batch
        .par_iter()
        .map(|p| loss_gradients(&p.prev, &p.cur, params, &p.supervision, opts))
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l * scale;
        grads.add_scaled(g, scale);
    }
    Ok((loss, grads))
}

/// Trains a freshly initialised head. Pairs without supervision are skipped.
pub fn train(dataset: &[TrainingPair], config: &TrainConfig) -> Result<TrainOutcome> {
    let d_in = dataset
        .iter()
        .flat_map(|p| p.prev.iter().chain(&p.cur))
        .map(Vec::len)
        .next()
        .ok_or_else(|| Error::InvalidConfig("training set has no RoIs".into()))?;
    let params = EmbeddingHeadParams::init(d_in, config.d_hidden, config.d_embed, config.seed)?;
    train_from(params, dataset, config)
}

/// Continues training from `params`.
pub fn train_from(
    mut params: EmbeddingHeadParams,
    dataset: &[TrainingPair],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if !(config.lr.is_finite() && config.lr > 0.0) {
        return Err(Error::InvalidConfig(format!("learning rate {}", config.lr)));
    }
    let usable: Vec<&TrainingPair> = dataset
        .iter()
        .filter(|p| !p.supervision.is_empty())
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptySupervision);
    }
    let batch = config.batch_size.unwrap_or(usable.len()).clamp(1, usable.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_ed0f_d47a);
    let mut order = usable;
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        if batch < order.len() {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let (loss, grads) = batch_gradient(chunk, &params, config.options)?;
            params.add_scaled(&grads, -config.lr);
            epoch_loss += loss * chunk.len() as f64;
        }
        loss_trace.push(epoch_loss / order.len() as f64);
        if !params.is_finite() {
            return Err(Error::Invariant("training diverged to non-finite weights".into()));
        }
    }
    Ok(TrainOutcome { params, loss_trace })
}

/// Fraction of supervised rows whose highest logit sits on the true column.
pub fn row_argmax_accuracy(
    pairs: &[TrainingPair],
    params: &EmbeddingHeadParams,
    opts: MatchOptions,
) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for p in pairs {
        let embed_set = |rois: &[Vec<f64>]| -> Result<EmbeddingSet> {
            let v = rois
                .iter()
                .map(|x| embed_values(x, params))
                .collect::<Result<Vec<_>>>()?;
            let ids = (0..v.len() as u16).collect();
            let set = EmbeddingSet::new(v, ids)?;
            Ok(if opts.cosine { set.normalized() } else { set })
        };
        let logits = correlate(&embed_set(&p.prev)?, &embed_set(&p.cur)?)?;
        for &(i, j) in &p.supervision.pairs {
            total += 1;
            if crate::correlation::argmax(logits[i].iter().copied()) == Some(j) {
                hits += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptySupervision);
    }
    Ok(hits as f64 / total as f64)
}
