//! Fusion, one-to-one assignment, mutual check, temporal rescue and the
//! sequence tracker that ties them together.

mod assign;
mod correlator;
mod fusion;
mod memory;
mod rescue;
mod tracker;

pub use assign::{
    greedy_assign, greedy_assign_with, is_mutual, mutual_check, AssignOrder, Assignment, Match,
};
pub use correlator::{gated_softmax_correlation, Correlator, TrackerMode};
pub use fusion::{fit_fusion_weights, fuse, fusion_samples, FusionSample, FusionWeights};
pub use memory::{FrameState, TrackMemory};
pub use rescue::{temporal_rescue, Rescue};
pub use tracker::{
    track_sequence, IdSource, MutualCheckStage, ProvenanceRecord, TrackedVideo, TrackerConfig,
};
