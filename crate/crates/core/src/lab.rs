//! Deviation testing of the equilibrium profile and best responses to honest-spec attesters.

use serde::{Deserialize, Serialize};

use crate::engine::{compute_payoffs, run_replicates, run_simulation, FocalDeviation, RecordLevel, SimConfig};
use crate::error::{Error, Result};
use crate::params::{ProtocolParams, MICROS_PER_MILLI};
use crate::strategy::{AttesterDeviation, ProposerStrategy};

/// Minimum number of slots sampled per attester deviation.
pub const MIN_ATTESTER_SAMPLES: u64 = 1_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationOutcome {
    pub descriptor: String,
    pub mean_payoff: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl DeviationOutcome {
    /// Exactly zero against a positive baseline, or below it by more than two standard errors.
    pub fn is_unprofitable(&self, baseline: f64) -> bool {
        (self.mean_payoff == 0.0 && baseline > 0.0) || self.mean_payoff + 2.0 * self.std_error < baseline
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub delta_star_us: i64,
    pub baseline_payoff: f64,
    pub baseline_std_error: f64,
    pub baseline_samples: u64,
    pub deviations: Vec<DeviationOutcome>,
    pub all_unprofitable: bool,
}

impl DeviationReport {
    fn new(delta_star_us: i64, baseline: DeviationOutcome, deviations: Vec<DeviationOutcome>) -> Self {
        let all_unprofitable = deviations.iter().all(|d| d.is_unprofitable(baseline.mean_payoff));
        DeviationReport {
            delta_star_us,
            baseline_payoff: baseline.mean_payoff,
            baseline_std_error: baseline.std_error,
            baseline_samples: baseline.samples,
            deviations,
            all_unprofitable,
        }
    }
}

/// A proposer action in the deviating slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposerDeviation {
    /// Release offset from the slot start.
    pub delay_us: i64,
    pub build_on_prev: bool,
}

impl ProposerDeviation {
    pub fn describe(&self) -> String {
        format!("delay={}us,build_on_prev={}", self.delay_us, u8::from(self.build_on_prev))
    }
}

/// `points` deviations: evenly spaced delays over `[0, Δ]` crossed with both build choices.
/// If the equilibrium action falls on the grid it is replaced by a 1 ms near miss.
pub fn proposer_deviation_grid(params: &ProtocolParams, delta_star_us: i64, points: usize) -> Vec<ProposerDeviation> {
    let delays = points.div_ceil(2).max(1);
    let slot = params.slot_length_us;
    let mut grid = Vec::with_capacity(points);
    for j in 0..delays {
        let delay_us = if delays == 1 {
            0
        } else {
            (slot as i128 * j as i128 / (delays - 1) as i128) as i64
        };
        for build_on_prev in [false, true] {
            if grid.len() == points {
                break;
            }
            let mut d = ProposerDeviation { delay_us, build_on_prev };
            if d.delay_us == delta_star_us && build_on_prev {
                d.delay_us = if delta_star_us + MICROS_PER_MILLI <= slot {
                    delta_star_us + MICROS_PER_MILLI
                } else {
                    delta_star_us - MICROS_PER_MILLI
                };
            }
            grid.push(d);
        }
    }
    grid
}

fn with_schedule(params: &ProtocolParams, delta_star_us: i64) -> Result<ProtocolParams> {
    let p = ProtocolParams {
        schedule_offset_us: delta_star_us,
        ..params.clone()
    };
    p.validate()?;
    Ok(p)
}

/// Slot at which unilateral deviations are placed, away from genesis and the horizon end.
pub fn deviation_slot(params: &ProtocolParams) -> u64 {
    params.horizon_slots / 2
}

/// Runs one equilibrium simulation per grid point in which the mid-horizon proposer
/// plays the grid action while everyone else follows the equilibrium profile.
pub fn check_proposer_deviation(
    params: &ProtocolParams,
    delta_star_us: i64,
    deviation_grid: &[ProposerDeviation],
) -> Result<DeviationReport> {
    let p = with_schedule(params, delta_star_us)?;
    if deviation_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if let Some(eq) = deviation_grid
        .iter()
        .find(|d| d.delay_us == delta_star_us && d.build_on_prev)
    {
        return Err(Error::NotADeviation(format!(
            "{} is the equilibrium action",
            eq.describe()
        )));
    }
    let k = deviation_slot(&p);
    let base = SimConfig::equilibrium(p);
    let baseline = run_simulation(&base)?.slots[k as usize].proposer_payoff;

    let outcomes: Result<Vec<DeviationOutcome>> = crate::par_map(deviation_grid, |d| {
        let cfg = base.clone().with_override(
            k,
            ProposerStrategy::Fixed {
                delay_us: d.delay_us,
                build_on_prev: d.build_on_prev,
            },
        );
        let trace = run_simulation(&cfg)?;
        Ok(DeviationOutcome {
            descriptor: d.describe(),
            mean_payoff: trace.slots[k as usize].proposer_payoff,
            std_error: 0.0,
            samples: 1,
        })
    })
    .into_iter()
    .collect();

    Ok(DeviationReport::new(
        delta_star_us,
        DeviationOutcome {
            descriptor: "equilibrium".into(),
            mean_payoff: baseline,
            std_error: 0.0,
            samples: 1,
        },
        outcomes?,
    ))
}

/// Attester deviations tried by [`check_attester_deviation`]: flipping the vote, and
/// releasing half a slot or a full slot late.
pub fn default_attester_deviations(params: &ProtocolParams) -> Vec<AttesterDeviation> {
    vec![
        AttesterDeviation::FlipVote,
        AttesterDeviation::DelayRelease {
            shift_us: params.slot_length_us / 2,
        },
        AttesterDeviation::DelayRelease {
            shift_us: params.slot_length_us,
        },
    ]
}

pub fn check_attester_deviation(params: &ProtocolParams, delta_star_us: i64, mc_samples: u64) -> Result<DeviationReport> {
    check_attester_deviations(params, delta_star_us, mc_samples, &default_attester_deviations(params))
}

/// Estimates one attester's expected payoff under equilibrium play (pooled over all
/// attesters of `mc_samples` slots) and under each deviation (attester 0 of every slot).
pub fn check_attester_deviations(
    params: &ProtocolParams,
    delta_star_us: i64,
    mc_samples: u64,
    deviations: &[AttesterDeviation],
) -> Result<DeviationReport> {
    if mc_samples < MIN_ATTESTER_SAMPLES {
        return Err(Error::config(format!(
            "mc_samples must be at least {MIN_ATTESTER_SAMPLES}, got {mc_samples}"
        )));
    }
    if deviations.is_empty() {
        return Err(Error::EmptyGrid);
    }
    for d in deviations {
        d.validate()?;
    }
    let p = with_schedule(
        &ProtocolParams {
            horizon_slots: mc_samples,
            ..params.clone()
        },
        delta_star_us,
    )?;

    let base = SimConfig::equilibrium(p);
    let ledger = compute_payoffs(&run_simulation(&base)?)?;
    let baseline = bernoulli_outcome(
        "equilibrium",
        ledger.attester_payoff_totals.iter().map(|t| *t as u64).sum(),
        ledger.attester_samples,
    );

    let outcomes: Result<Vec<DeviationOutcome>> = crate::par_map(deviations, |d| {
        let cfg = SimConfig {
            attester_deviation: Some(FocalDeviation {
                attester: 0,
                deviation: *d,
            }),
            ..base.clone()
        }
        .with_record_level(RecordLevel::Full);
        let trace = run_simulation(&cfg)?;
        let paid: u64 = trace
            .slots
            .iter()
            .map(|s| s.detail.as_ref().map_or(0, |det| det.payoffs[0] as u64))
            .sum();
        Ok(bernoulli_outcome(&d.describe(), paid, trace.slots.len() as u64))
    })
    .into_iter()
    .collect();

    Ok(DeviationReport::new(delta_star_us, baseline, outcomes?))
}

fn bernoulli_outcome(descriptor: &str, successes: u64, samples: u64) -> DeviationOutcome {
    let mean = successes as f64 / samples as f64;
    let var = if samples > 1 {
        mean * (1.0 - mean) * samples as f64 / (samples - 1) as f64
    } else {
        0.0
    };
    DeviationOutcome {
        descriptor: descriptor.to_string(),
        mean_payoff: mean,
        std_error: (var / samples as f64).sqrt(),
        samples,
    }
}

/// Expected payoff of a proposer as a function of its release delay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurve {
    pub delays_us: Vec<i64>,
    pub expected_payoffs: Vec<f64>,
    pub payoff_std_errors: Vec<f64>,
    pub attestation_shares: Vec<f64>,
    /// Fraction of runs in which the delayed block became canonical.
    pub canonical_rates: Vec<f64>,
    pub runs_per_point: u64,
    /// Delay with the highest expected payoff; ties go to the smaller delay.
    pub argmax_delay_us: i64,
}

/// Monte-Carlo payoff curve of a proposer who delays by `d` while every other proposer
/// releases at the slot start and all attesters follow the honest-spec rule.
///
/// Each point runs a three-slot game (deviator in the middle) `runs_per_point` times. The
/// same replicate seeds are used at every grid point.
pub fn best_response_delay(params: &ProtocolParams, delay_grid: &[i64], runs_per_point: u64) -> Result<ResponseCurve> {
    if delay_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if runs_per_point == 0 {
        return Err(Error::config("runs_per_point must be positive"));
    }
    for &d in delay_grid {
        if !(0..=params.slot_length_us).contains(&d) {
            return Err(Error::OutOfRange {
                value: d,
                lo: 0,
                hi: params.slot_length_us,
            });
        }
    }
    let p = ProtocolParams {
        horizon_slots: 3,
        ..params.clone()
    };
    p.validate()?;
    let base = SimConfig::honest_spec(p);
    let k = 1usize;

    let points: Result<Vec<(f64, f64, f64, f64)>> = crate::par_map(delay_grid, |&d| {
        let cfg = base
            .clone()
            .with_override(k as u64, ProposerStrategy::GreedyDelay { delay_us: d });
        let traces = run_replicates(&cfg, runs_per_point)?;
        let n = traces.len() as f64;
        let payoffs: Vec<f64> = traces.iter().map(|t| t.slots[k].proposer_payoff).collect();
        let mean = payoffs.iter().sum::<f64>() / n;
        let var = if traces.len() > 1 {
            payoffs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let share = traces.iter().map(|t| t.slots[k].attestation_share.value()).sum::<f64>() / n;
        let canonical = traces
            .iter()
            .filter(|t| t.slots[k].canonical == Some(true))
            .count() as f64
            / n;
        Ok((mean, (var / n).sqrt(), share, canonical))
    })
    .into_iter()
    .collect();
    let points = points?;

    let mut best = 0;
    for i in 1..points.len() {
        let (cur, top) = (points[i].0, points[best].0);
        if cur > top || (cur == top && delay_grid[i] < delay_grid[best]) {
            best = i;
        }
    }

    Ok(ResponseCurve {
        delays_us: delay_grid.to_vec(),
        expected_payoffs: points.iter().map(|p| p.0).collect(),
        payoff_std_errors: points.iter().map(|p| p.1).collect(),
        attestation_shares: points.iter().map(|p| p.2).collect(),
        canonical_rates: points.iter().map(|p| p.3).collect(),
        runs_per_point,
        argmax_delay_us: delay_grid[best],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta_star_us: i64,
    /// Common proposer payoff when all slots agree, otherwise the mean.
    pub proposer_payoff: f64,
    pub proposer_payoff_constant: bool,
    pub attester_payoff: f64,
    pub attester_std_error: f64,
    pub all_canonical: bool,
}

/// Equilibrium-profile simulations for each `Δ*` in `grid`, all with the same seed.
pub fn sweep_delta_star(params: &ProtocolParams, grid: &[i64]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    for &d in grid {
        if !(0..=params.slot_length_us).contains(&d) {
            return Err(Error::OutOfRange {
                value: d,
                lo: 0,
                hi: params.slot_length_us,
            });
        }
    }
    let rows: Result<Vec<SweepRow>> = crate::par_map(grid, |&d| {
        let p = with_schedule(params, d)?;
        let trace = run_simulation(&SimConfig::equilibrium(p))?;
        let ledger = compute_payoffs(&trace)?;
        let first = ledger.proposer_payoffs[0];
        let constant = ledger.proposer_payoffs.iter().all(|v| *v == first);
        let proposer_payoff = if constant {
            first
        } else {
            ledger.total_proposer_payoff / ledger.proposer_payoffs.len() as f64
        };
        let attester = bernoulli_outcome(
            "equilibrium",
            ledger.attester_payoff_totals.iter().map(|t| *t as u64).sum(),
            ledger.attester_samples,
        );
        Ok(SweepRow {
            delta_star_us: d,
            proposer_payoff,
            proposer_payoff_constant: constant,
            attester_payoff: attester.mean_payoff,
            attester_std_error: attester.std_error,
            all_canonical: trace.slots.iter().all(|s| s.canonical == Some(true)),
        })
    })
    .into_iter()
    .collect();
    rows
}

/// Probability that two independent exponential latencies with mean `theta` sum to at
/// most `window`: `1 - e^(-x)(1 + x)` with `x = window / theta`.
pub fn erlang2_cdf(window_us: i64, theta_us: i64) -> f64 {
    let x = window_us as f64 / theta_us as f64;
    1.0 - (-x).exp() * (1.0 + x)
}
