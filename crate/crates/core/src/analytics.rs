//! Metrics over simulation traces: next-slot attestation shares and correlations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SimulationTrace;
use crate::params::MICROS_PER_MILLI;

/// One point of a plot-ready curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Delay or signing time, ms.
    pub x: f64,
    /// Share or payoff.
    pub y: f64,
    pub n: u64,
    pub se: f64,
}

#[derive(Default)]
struct Bucket {
    offset_sum_ms: f64,
    slots: u64,
    votes: u64,
    attestations: u64,
}

/// Share of each slot's fresh attestations that vote for its block, bucketed by the
/// block's release offset into the slot (`bucket_ms` wide).
///
/// Abstentions count as competing votes for "no block". `x` is the mean release offset
/// of the bucket's slots, `n` the number of fresh attestations pooled into `y`, and `se`
/// the binomial standard error. Buckets with no fresh attestation are omitted.
pub fn next_slot_share(trace: &SimulationTrace, bucket_ms: i64) -> Result<Vec<CurvePoint>> {
    pooled_next_slot_share(std::slice::from_ref(trace), bucket_ms)
}

/// [`next_slot_share`] pooled over several traces.
pub fn pooled_next_slot_share(traces: &[SimulationTrace], bucket_ms: i64) -> Result<Vec<CurvePoint>> {
    if bucket_ms <= 0 {
        return Err(Error::config("bucket width must be positive"));
    }
    if traces.iter().all(|t| t.slots.is_empty()) {
        return Err(Error::Empty("trace has no slots"));
    }
    let mut buckets: BTreeMap<i64, Bucket> = BTreeMap::new();
    for trace in traces {
        for slot in &trace.slots {
            let attestations = (slot.fresh_votes + slot.fresh_abstentions) as u64;
            if attestations == 0 {
                continue;
            }
            let offset_ms = slot.release_offset_us(&trace.params) as f64 / MICROS_PER_MILLI as f64;
            let b = buckets
                .entry((offset_ms / bucket_ms as f64).floor() as i64)
                .or_default();
            b.offset_sum_ms += offset_ms;
            b.slots += 1;
            b.votes += slot.fresh_votes as u64;
            b.attestations += attestations;
        }
    }
    Ok(buckets
        .into_values()
        .map(|b| {
            let y = b.votes as f64 / b.attestations as f64;
            CurvePoint {
                x: b.offset_sum_ms / b.slots as f64,
                y,
                n: b.attestations,
                se: (y * (1.0 - y) / b.attestations as f64).sqrt(),
            }
        })
        .collect())
}

/// `(release offset, mean block arrival offset at attesters)` per slot, in ms.
pub fn release_and_arrival_ms(trace: &SimulationTrace) -> (Vec<f64>, Vec<f64>) {
    let milli = MICROS_PER_MILLI as f64;
    trace
        .slots
        .iter()
        .map(|s| {
            (
                s.release_offset_us(&trace.params) as f64 / milli,
                s.mean_arrival_offset_us / milli,
            )
        })
        .unzip()
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::UndefinedCorrelation(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least 2 points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
