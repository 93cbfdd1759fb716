use std::collections::{BTreeSet, HashSet};

use super::assign::is_mutual;
use super::correlator::Correlator;
use super::memory::{FrameState, TrackMemory};
use crate::error::{Error, Result};
use crate::flow::FlowField;

/// A current-frame instance that takes over a track id from memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rescue {
    pub stored_id: u16,
    pub col: usize,
    pub score: f64,
    /// Frame the id was recovered from.
    pub from_frame: usize,
}

/// Tries to re-attach unmatched instances of `current` to tracks that
/// vanished before the predecessor frame.
///
/// For each stored frame, newest first, rows whose id is in `taken_ids` are
/// not eligible. A pair is adopted only if its forward and backward scores
/// both exceed `theta` and it is a mutual maximum in both directions.
/// `flows[k]` must carry frame `k` to frame `k + 1`.
pub fn temporal_rescue(
    unmatched_cols: &[usize],
    current: &FrameState,
    taken_ids: &HashSet<u16>,
    memory: &TrackMemory,
    theta: f64,
    correlator: &Correlator<'_>,
    flows: &[FlowField],
) -> Result<Vec<Rescue>> {
    let mut remaining: BTreeSet<usize> = unmatched_cols.iter().copied().collect();
    let mut taken = taken_ids.clone();
    let mut out = Vec::new();
    for stored in memory.newest_first() {
        if remaining.is_empty() {
            break;
        }
        let eligible: Vec<usize> = (0..stored.masks.len())
            .filter(|&i| !taken.contains(&stored.masks[i].instance_id()))
            .collect();
        if eligible.is_empty() {
            continue;
        }
        let chain: Vec<&FlowField> = flows
            .get(stored.index..current.index)
            .ok_or_else(|| {
                Error::Invariant(format!(
                    "no flow chain from frame {} to {}",
                    stored.index, current.index
                ))
            })?
            .iter()
            .collect();
        let fwd = correlator.forward(stored, current, &chain)?;
        let bwd = correlator.backward(stored, current, &chain)?;

        let mut candidates = Vec::new();
        for &i in &eligible {
            for &j in &remaining {
                let (sf, sb) = (fwd.get(i, j), bwd.get(j, i));
                if sf > theta && sb > theta && is_mutual(&fwd, i, j) && is_mutual(&bwd, j, i) {
                    candidates.push((sf, i, j));
                }
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (score, i, j) in candidates {
            let id = stored.masks[i].instance_id();
            if taken.contains(&id) || !remaining.contains(&j) {
                continue;
            }
            taken.insert(id);
            remaining.remove(&j);
            out.push(Rescue {
                stored_id: id,
                col: j,
                score,
                from_frame: stored.index,
            });
        }
    }
    out.sort_by_key(|r| r.col);
    Ok(out)
}
