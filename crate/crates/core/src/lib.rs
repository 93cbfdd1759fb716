//! Tracking association and evaluation for video panoptic segmentation.
//!
//! Per-frame panoptic label maps and dense optical flow go in; temporally
//! consistent instance ids come out. Identities are propagated by an
//! appearance tracker (RoI-mask embeddings matched through a row softmax),
//! a position tracker (flow-warped masks scored by dice), or their fusion,
//! followed by a thresholded one-to-one assignment, a mutual check and
//! temporal rescue of instances that vanish for a few frames. Results are
//! scored with video panoptic quality (VPQ), and a seeded simulator
//! provides ground-truth sequences.

pub mod association;
mod binio;
pub mod config;
pub mod correlation;
pub mod error;
pub mod flow;
pub mod instance;
pub mod mask;
pub mod pixel;
pub mod sequence;
pub mod simulator;
pub mod vpq;

pub use error::{Error, Result};
