//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export takes plain numbers and returns a JSON string; the `*_json` functions
//! hold the logic and are usable (and tested) natively.

use serde::Serialize;
use timing_core::analytics::pooled_next_slot_share;
use timing_core::engine::{run_replicates, SimConfig};
use timing_core::lab::best_response_delay;
use timing_core::latency::LatencyDistribution;
use timing_core::market::{
    estimate_mvot, estimate_pooled_ols, generate_bid_stream, residualized_bins, BidStreamConfig, SlotBaseline,
};
use timing_core::strategy::{expected_honest_share, optimal_delay, ProposerStrategy};
use timing_core::ProtocolParams;
use wasm_bindgen::prelude::*;

const MS: i64 = 1_000;

type DemoResult = Result<String, String>;

fn params(theta_ms: f64, deadline_ms: f64, gamma: f64, attesters: u32, seed: u64) -> ProtocolParams {
    ProtocolParams {
        mean_latency_us: (theta_ms * MS as f64).round() as i64,
        attestation_deadline_us: (deadline_ms * MS as f64).round() as i64,
        vote_threshold: gamma,
        attester_count: attesters,
        seed,
        ..Default::default()
    }
}

fn json<T: Serialize>(value: &T) -> DemoResult {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct ShareCurve {
    offsets_ms: Vec<f64>,
    simulated: Vec<f64>,
    expected: Vec<f64>,
}

/// Next-slot attestation share for blocks released at `points` evenly spaced offsets
/// over `[0, 1.25 D]`, against the large-committee curve `1 - exp(-(D - d) / θ)`.
pub fn share_curve_json(theta_ms: f64, deadline_ms: f64, attesters: u32, slots: u64, points: u32, seed: u64) -> DemoResult {
    let p = ProtocolParams {
        horizon_slots: slots,
        ..params(theta_ms, deadline_ms, 0.5, attesters, seed)
    };
    p.validate().map_err(|e| e.to_string())?;
    let points = points.max(2);
    let mut curve = ShareCurve {
        offsets_ms: Vec::new(),
        simulated: Vec::new(),
        expected: Vec::new(),
    };
    for k in 0..points {
        let offset_us = (1.25 * p.attestation_deadline_us as f64 * k as f64 / (points - 1) as f64).round() as i64;
        let offset_us = offset_us.min(p.slot_length_us);
        let cfg = SimConfig::honest_spec(p.clone()).with_default_proposer(ProposerStrategy::GreedyDelay { delay_us: offset_us });
        let traces = run_replicates(&cfg, 1).map_err(|e| e.to_string())?;
        let pts = pooled_next_slot_share(&traces, 1_000_000).map_err(|e| e.to_string())?;
        curve.offsets_ms.push(offset_us as f64 / MS as f64);
        curve.simulated.push(pts.first().map_or(0.0, |pt| pt.y));
        curve.expected.push(expected_honest_share(&p, offset_us));
    }
    json(&curve)
}

#[derive(Serialize)]
struct BestResponse {
    delays_ms: Vec<f64>,
    expected_payoffs: Vec<f64>,
    attestation_shares: Vec<f64>,
    argmax_ms: f64,
    closed_form_ms: Option<f64>,
}

/// Expected payoff of a proposer delaying its block, over `[0, D]` in `step_ms` steps.
pub fn best_response_json(
    gamma: f64,
    theta_ms: f64,
    deadline_ms: f64,
    attesters: u32,
    runs: u64,
    step_ms: f64,
    seed: u64,
) -> DemoResult {
    let p = params(theta_ms, deadline_ms, gamma, attesters, seed);
    p.validate().map_err(|e| e.to_string())?;
    let step = ((step_ms * MS as f64).round() as i64).max(MS);
    let end = p.attestation_deadline_us.min(p.slot_length_us);
    let grid: Vec<i64> = (0..=end).step_by(step as usize).collect();
    let curve = best_response_delay(&p, &grid, runs.max(1)).map_err(|e| e.to_string())?;
    json(&BestResponse {
        delays_ms: curve.delays_us.iter().map(|d| *d as f64 / MS as f64).collect(),
        expected_payoffs: curve.expected_payoffs,
        attestation_shares: curve.attestation_shares,
        argmax_ms: curve.argmax_delay_us as f64 / MS as f64,
        closed_form_ms: optimal_delay(&p).ok().map(|d| d as f64 / MS as f64),
    })
}

#[derive(Serialize)]
struct Mvot {
    planted: f64,
    fixed_effects: f64,
    fixed_effects_se: f64,
    pooled_ols: f64,
    bin_start_ms: Vec<i64>,
    bin_median_eth: Vec<f64>,
}

/// Fixed-effects vs pooled slope on generated bids. With `correlation` > 0, slot
/// baselines rise by that many ETH per second of the slot's mean bid time and each
/// slot's arrival window is jittered by up to a second.
pub fn mvot_json(slots: u64, bids_per_slot: u32, mev_rate: f64, noise_sd: f64, correlation: f64, seed: u64) -> DemoResult {
    let cfg = BidStreamConfig {
        n_slots: slots,
        bids_per_slot,
        mev_rate,
        noise_sd_eth: noise_sd,
        baseline: if correlation > 0.0 {
            SlotBaseline::TimestampCorrelated {
                floor_eth: 0.2,
                eth_per_s: correlation,
            }
        } else {
            SlotBaseline::Independent {
                floor_eth: 0.1,
                spread: LatencyDistribution::Exponential { mean: 0.05 },
            }
        },
        window_jitter_ms: if correlation > 0.0 { 1_000 } else { 0 },
        seed,
        ..Default::default()
    };
    let bids = generate_bid_stream(&cfg).map_err(|e| e.to_string())?;
    let fe = estimate_mvot(&bids).map_err(|e| e.to_string())?;
    let pooled = estimate_pooled_ols(&bids).map_err(|e| e.to_string())?;
    let bins = residualized_bins(&bids, 250).map_err(|e| e.to_string())?;
    json(&Mvot {
        planted: mev_rate,
        fixed_effects: fe.slope_eth_per_s,
        fixed_effects_se: fe.std_error,
        pooled_ols: pooled.slope_eth_per_s,
        bin_start_ms: bins.iter().map(|b| b.bin_start_ms).collect(),
        bin_median_eth: bins.iter().map(|b| b.median_eth).collect(),
    })
}

#[wasm_bindgen]
pub fn share_curve(theta_ms: f64, deadline_ms: f64, attesters: u32, slots: u32, points: u32, seed: u32) -> Result<String, JsError> {
    share_curve_json(theta_ms, deadline_ms, attesters, slots as u64, points, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn best_response(
    gamma: f64,
    theta_ms: f64,
    deadline_ms: f64,
    attesters: u32,
    runs: u32,
    step_ms: f64,
    seed: u32,
) -> Result<String, JsError> {
    best_response_json(gamma, theta_ms, deadline_ms, attesters, runs as u64, step_ms, seed as u64)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn mvot(slots: u32, bids_per_slot: u32, mev_rate: f64, noise_sd: f64, correlation: f64, seed: u32) -> Result<String, JsError> {
    mvot_json(slots as u64, bids_per_slot, mev_rate, noise_sd, correlation, seed as u64).map_err(|e| JsError::new(&e))
}
