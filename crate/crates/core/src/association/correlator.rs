use serde::{Deserialize, Serialize};

use super::fusion::{fuse, FusionWeights};
use super::memory::FrameState;
use crate::correlation::{CorrelationMatrix, MatrixKind};
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::instance::{correlate, EmbeddingSet, InstanceTracker};
use crate::mask::InstanceMask;
use crate::pixel::pixel_correlation_chain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerMode {
    Instance,
    Pixel,
    #[default]
    Hybrid,
}

impl TrackerMode {
    pub fn uses_instance(self) -> bool {
        matches!(self, TrackerMode::Instance | TrackerMode::Hybrid)
    }

    pub fn uses_pixel(self) -> bool {
        matches!(self, TrackerMode::Pixel | TrackerMode::Hybrid)
    }

    pub fn name(self) -> &'static str {
        match self {
            TrackerMode::Instance => "instance",
            TrackerMode::Pixel => "pixel",
            TrackerMode::Hybrid => "hybrid",
        }
    }
}

impl std::str::FromStr for TrackerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "instance" => Ok(TrackerMode::Instance),
            "pixel" => Ok(TrackerMode::Pixel),
            "hybrid" => Ok(TrackerMode::Hybrid),
            other => Err(Error::InvalidConfig(format!("unknown tracker mode {other:?}"))),
        }
    }
}

/// Computes frame-to-frame similarity in the configured tracker mode.
#[derive(Debug, Clone, Copy)]
pub struct Correlator<'a> {
    pub mode: TrackerMode,
    pub instance: Option<&'a InstanceTracker>,
    pub fusion: FusionWeights,
    pub class_gated: bool,
}

impl<'a> Correlator<'a> {
    pub fn new(
        mode: TrackerMode,
        instance: Option<&'a InstanceTracker>,
        fusion: FusionWeights,
        class_gated: bool,
    ) -> Result<Self> {
        if mode.uses_instance() && instance.is_none() {
            return Err(Error::InvalidConfig(format!(
                "{} mode needs a trained embedding head",
                mode.name()
            )));
        }
        Ok(Self {
            mode,
            instance,
            fusion,
            class_gated,
        })
    }

    /// Frame state for `masks`, embedding them when the mode needs it.
    pub fn frame_state(&self, index: usize, masks: Vec<InstanceMask>) -> Result<FrameState> {
        let embeddings = match (self.mode.uses_instance(), self.instance) {
            (true, Some(t)) => Some(t.embed_masks(&masks)?),
            _ => None,
        };
        Ok(FrameState {
            index,
            masks,
            embeddings,
        })
    }

    /// Similarity from `from` (rows) to `to` (columns); `flows` carry `from`
    /// forward to `to`.
    pub fn forward(
        &self,
        from: &FrameState,
        to: &FrameState,
        flows: &[&FlowField],
    ) -> Result<CorrelationMatrix> {
        let inst = || self.instance_matrix(from, to);
        let pix = || pixel_correlation_chain(&from.masks, flows, &to.masks, self.class_gated);
        match self.mode {
            TrackerMode::Instance => inst(),
            TrackerMode::Pixel => pix(),
            TrackerMode::Hybrid => fuse(&inst()?, &pix()?, &self.fusion),
        }
    }

    /// Similarity from `to` (rows) back to `from` (columns). The instance
    /// part is re-normalised over `from`; the pixel part reuses the forward
    /// warp since dice is symmetric and only forward flow is available.
    pub fn backward(
        &self,
        from: &FrameState,
        to: &FrameState,
        flows: &[&FlowField],
    ) -> Result<CorrelationMatrix> {
        let inst = || self.instance_matrix(to, from);
        let pix = || {
            pixel_correlation_chain(&from.masks, flows, &to.masks, self.class_gated)
                .map(|m| m.transpose())
        };
        match self.mode {
            TrackerMode::Instance => inst(),
            TrackerMode::Pixel => pix(),
            TrackerMode::Hybrid => fuse(&inst()?, &pix()?, &self.fusion),
        }
    }

    fn instance_matrix(&self, rows: &FrameState, cols: &FrameState) -> Result<CorrelationMatrix> {
        let (a, b) = match (&rows.embeddings, &cols.embeddings) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::Invariant(
                    "instance correlation requested for frames without embeddings".into(),
                ))
            }
        };
        let gate = self.class_gated.then(|| {
            (
                rows.masks.iter().map(InstanceMask::class_id).collect::<Vec<_>>(),
                cols.masks.iter().map(InstanceMask::class_id).collect::<Vec<_>>(),
            )
        });
        gated_softmax_correlation(a, b, gate.as_ref().map(|(r, c)| (&r[..], &c[..])))
    }
}

/// Row softmax of embedding correlations. With `classes`, each row is
/// normalised over same-class columns only; rows without any are all zero.
pub fn gated_softmax_correlation(
    rows: &EmbeddingSet,
    cols: &EmbeddingSet,
    classes: Option<(&[u16], &[u16])>,
) -> Result<CorrelationMatrix> {
    let logits = correlate(rows, cols)?;
    let mut scores = Vec::with_capacity(rows.len() * cols.len());
    for (i, row) in logits.iter().enumerate() {
        let allowed = |j: usize| classes.is_none_or(|(rc, cc)| rc[i] == cc[j]);
        let max = (0..row.len())
            .filter(|&j| allowed(j))
            .map(|j| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = (0..row.len())
            .map(|j| if allowed(j) { (row[j] - max).exp() } else { 0.0 })
            .collect();
        let sum: f64 = exps.iter().sum();
        scores.extend(exps.iter().map(|e| if sum > 0.0 { e / sum } else { 0.0 }));
    }
    CorrelationMatrix::new(
        MatrixKind::Instance,
        rows.instance_ids.clone(),
        cols.instance_ids.clone(),
        scores,
    )
}
