//! Position-based correlation: flow-warped masks scored by the dice
//! coefficient.

use rayon::prelude::*;

use crate::correlation::{CorrelationMatrix, MatrixKind};
use crate::error::Result;
use crate::flow::{warp_mask_chain, FlowField};
use crate::mask::{check_dims, InstanceMask};

/// `2|P ∩ G| / (|P| + |G|)` for binary masks; 0 when both are empty.
pub fn dice(p: &InstanceMask, g: &InstanceMask) -> Result<f64> {
    let inter = p.intersection(g)?;
    let denom = p.area() + g.area();
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * inter as f64 / denom as f64)
}

/// Dice over soft masks, `2 Σ p g / (Σ p² + Σ g²)`. Reduces to [`dice`] on
/// binary inputs.
pub fn soft_dice(p: &[f64], g: &[f64]) -> Result<f64> {
    check_dims((p.len(), 1), (g.len(), 1))?;
    let (mut num, mut pp, mut gg) = (0.0, 0.0, 0.0);
    for (&a, &b) in p.iter().zip(g) {
        num += a * b;
        pp += a * a;
        gg += b * b;
    }
    if pp + gg == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * num / (pp + gg))
}

/// Dice of every warped `prev` mask against every `cur` mask.
///
/// With `class_gated`, cells pairing different classes are zero.
pub fn pixel_correlation(
    prev: &[InstanceMask],
    flow: &FlowField,
    cur: &[InstanceMask],
    class_gated: bool,
) -> Result<CorrelationMatrix> {
    pixel_correlation_chain(prev, &[flow], cur, class_gated)
}

/// [`pixel_correlation`] across several frames: `prev` masks are warped
/// through each flow in turn.
pub fn pixel_correlation_chain(
    prev: &[InstanceMask],
    flows: &[&FlowField],
    cur: &[InstanceMask],
    class_gated: bool,
) -> Result<CorrelationMatrix> {
    for m in prev.iter().chain(cur) {
        for f in flows {
            check_dims(f.dims(), m.dims())?;
        }
    }
    let rows: Vec<Vec<f64>> = prev
        .par_iter()
        .map(|p| {
            let warped = warp_mask_chain(p, flows.iter().copied())?;
            cur.iter()
                .map(|c| {
                    if class_gated && c.class_id() != p.class_id() {
                        Ok(0.0)
                    } else {
                        dice(&warped, c)
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    CorrelationMatrix::new(
        MatrixKind::Pixel,
        prev.iter().map(InstanceMask::instance_id).collect(),
        cur.iter().map(InstanceMask::instance_id).collect(),
        rows.concat(),
    )
}
