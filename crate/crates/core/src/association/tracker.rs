use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::assign::{greedy_assign_filtered, is_mutual, mutual_check, AssignOrder, Assignment};
use super::correlator::{Correlator, TrackerMode};
use super::fusion::FusionWeights;
use super::memory::{FrameState, TrackMemory};
use super::rescue::temporal_rescue;
use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::instance::InstanceTracker;
use crate::mask::{extract_things, Label, SegmentationMap};

/// Whether the mutual check filters the greedy result or restricts the
/// cells greedy may pick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutualCheckStage {
    #[default]
    AfterAssign,
    BeforeAssign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub mode: TrackerMode,
    pub tau_match: f64,
    pub theta: f64,
    pub mutual_check: bool,
    pub mutual_check_stage: MutualCheckStage,
    pub temporal: bool,
    /// Frames kept in memory beyond the immediate predecessor.
    pub memory_window: usize,
    pub fusion: FusionWeights,
    pub class_gated: bool,
    pub assign_order: AssignOrder,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            mode: TrackerMode::Hybrid,
            tau_match: 0.3,
            theta: 0.01,
            mutual_check: true,
            mutual_check_stage: MutualCheckStage::AfterAssign,
            temporal: true,
            memory_window: 2,
            fusion: FusionWeights::default(),
            class_gated: true,
            assign_order: AssignOrder::BestScore,
        }
    }
}

impl TrackerConfig {
    pub fn with_mode(mode: TrackerMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    /// Greedy assignment followed by the configured mutual check.
    pub fn assign(&self, m: &CorrelationMatrix) -> Assignment {
        match (self.mutual_check, self.mutual_check_stage) {
            (false, _) => greedy_assign_filtered(m, self.tau_match, self.assign_order, |_, _| true),
            (true, MutualCheckStage::AfterAssign) => {
                let a = greedy_assign_filtered(m, self.tau_match, self.assign_order, |_, _| true);
                mutual_check(m, &a)
            }
            (true, MutualCheckStage::BeforeAssign) => {
                greedy_assign_filtered(m, self.tau_match, self.assign_order, |i, j| {
                    is_mutual(m, i, j)
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdSource {
    /// Matched to the previous frame.
    Match,
    /// Recovered from an older frame in memory.
    Rescue,
    /// Started a new track.
    New,
}

/// One line of the provenance log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub frame: usize,
    pub instance_id: u16,
    pub source: IdSource,
    pub score: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrackedVideo {
    pub frames: Vec<SegmentationMap>,
    pub provenance: Vec<ProvenanceRecord>,
}

impl TrackedVideo {
    /// Provenance as JSON lines.
    pub fn provenance_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for rec in &self.provenance {
            out.push_str(&serde_json::to_string(rec)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Assigns persistent instance ids across a sequence.
///
/// `flows[k]` carries frame `k` to frame `k + 1`. Stuff pixels pass through
/// unchanged; thing instances of frame 0 get ids `1..=k`.
pub fn track_sequence(
    frames: &[SegmentationMap],
    flows: &[FlowField],
    config: &TrackerConfig,
    instance: Option<&InstanceTracker>,
) -> Result<TrackedVideo> {
    if frames.is_empty() {
        return Ok(TrackedVideo {
            frames: vec![],
            provenance: vec![],
        });
    }
    if flows.len() + 1 != frames.len() {
        return Err(Error::LengthMismatch {
            expected: frames.len() - 1,
            actual: flows.len(),
        });
    }
    let dims = frames[0].dims();
    for d in frames.iter().map(SegmentationMap::dims).chain(flows.iter().map(FlowField::dims)) {
        crate::mask::check_dims(dims, d)?;
    }
    let correlator = Correlator::new(config.mode, instance, config.fusion, config.class_gated)?;
    let mut memory = TrackMemory::new(config.memory_window);
    let mut out_frames = Vec::with_capacity(frames.len());
    let mut provenance = Vec::new();
    let mut prev: Option<FrameState> = None;

    for (t, frame) in frames.iter().enumerate() {
        let masks = extract_things(frame);
        let mut ids: Vec<Option<u16>> = vec![None; masks.len()];
        let mut sources: Vec<(IdSource, Option<f64>)> = vec![(IdSource::New, None); masks.len()];
        let state = correlator.frame_state(t, masks)?;

        if let Some(prev) = &prev {
            let m = correlator.forward(prev, &state, &[&flows[t - 1]])?;
            let assignment = config.assign(&m);
            for mm in &assignment.matches {
                ids[mm.col] = Some(prev.masks[mm.row].instance_id());
                sources[mm.col] = (IdSource::Match, Some(mm.score));
            }
            if config.temporal && !memory.is_empty() && !assignment.unmatched_cols.is_empty() {
                let taken: HashSet<u16> = prev.ids().chain(ids.iter().flatten().copied()).collect();
                let rescues = temporal_rescue(
                    &assignment.unmatched_cols,
                    &state,
                    &taken,
                    &memory,
                    config.theta,
                    &correlator,
                    flows,
                )?;
                for r in rescues {
                    ids[r.col] = Some(r.stored_id);
                    sources[r.col] = (IdSource::Rescue, Some(r.score));
                }
            }
        }
        let ids: Vec<u16> = ids
            .into_iter()
            .map(|id| id.map_or_else(|| memory.allocate_id(), Ok))
            .collect::<Result<_>>()?;

        let unique: HashSet<u16> = ids.iter().copied().collect();
        if unique.len() != ids.len() {
            return Err(Error::Invariant(format!("duplicate track id in frame {t}")));
        }
        let local_to_track: HashMap<Label, u16> = state
            .masks
            .iter()
            .zip(&ids)
            .map(|(m, &id)| (Label::new(m.class_id(), m.instance_id()), id))
            .collect();
        out_frames.push(frame.map_instances(|l| local_to_track[&l])?);
        for (&id, &(source, score)) in ids.iter().zip(&sources) {
            provenance.push(ProvenanceRecord {
                frame: t,
                instance_id: id,
                source,
                score,
            });
        }

        let tracked = FrameState {
            index: t,
            masks: state
                .masks
                .into_iter()
                .zip(&ids)
                .map(|(m, &id)| m.with_instance_id(id))
                .collect(),
            embeddings: state.embeddings.map(|mut e| {
                e.instance_ids = ids.clone();
                e
            }),
        };
        if let Some(old) = prev.replace(tracked) {
            memory.push(old)?;
        }
    }
    Ok(TrackedVideo {
        frames: out_frames,
        provenance,
    })
}
