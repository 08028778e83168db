//! Experiment runners behind the command-line tool and deterministic output writing.
//!
//! Every runner is a pure function of the [`ExperimentConfig`]; files are returned in
//! memory and written by [`write_outputs`] together with `effective_config.json`.

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::analytics::{pearson, pooled_next_slot_share, release_and_arrival_ms, CurvePoint};
use crate::config::{
    BestResponseSettings, CheckEquilibriumSettings, CurveMode, CurvesSettings, ExperimentConfig, MvotSettings,
    Settings, SimulateSettings, SweepSettings,
};
use crate::engine::{compute_payoffs, run_replicates, SimConfig};
use crate::error::{Error, Result};
use crate::lab::{
    best_response_delay, check_attester_deviation, check_proposer_deviation, erlang2_cdf, proposer_deviation_grid,
    sweep_delta_star, DeviationReport,
};
use crate::market::io::read_bids;
use crate::market::{
    estimate_mvot, estimate_pooled_ols, generate_bid_stream, residualized_bins, run_auctions, AuctionOutcome,
    RegressionReport,
};
use crate::params::{ProtocolParams, MICROS_PER_MILLI};
use crate::strategy::{expected_honest_share, optimal_delay, ProposerStrategy};

pub struct OutputFile {
    pub name: String,
    pub contents: Vec<u8>,
}

pub struct ExperimentOutput {
    pub files: Vec<OutputFile>,
    /// One-line human-readable result.
    pub headline: String,
}

impl ExperimentOutput {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|f| f.name == name).map(|f| f.contents.as_slice())
    }
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::config(format!("csv buffer: {e}")))
}

pub fn from_csv<T: DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_file<T: Serialize>(name: &str, rows: &[T]) -> Result<OutputFile> {
    Ok(OutputFile {
        name: name.into(),
        contents: to_csv(rows)?,
    })
}

fn json_file<T: Serialize + ?Sized>(name: &str, value: &T) -> Result<OutputFile> {
    Ok(OutputFile {
        name: name.into(),
        contents: to_json(value)?,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let p = &config.params;
    match &config.settings {
        Settings::Simulate(s) => simulate(p, s),
        Settings::Sweep(s) => sweep(p, s),
        Settings::CheckEquilibrium(s) => check_equilibrium(p, s),
        Settings::BestResponse(s) => best_response(p, s),
        Settings::Mvot(s) => mvot(s),
        Settings::Curves(s) => curves(p, s),
    }
}

/// Writes `output` and the effective config into `out_dir`, returning the paths written.
pub fn write_outputs(config: &ExperimentConfig, output: &ExperimentOutput, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let echo = OutputFile {
        name: "effective_config.json".into(),
        contents: config.to_json()?.into_bytes(),
    };
    let mut written = Vec::with_capacity(output.files.len() + 1);
    for file in std::iter::once(&echo).chain(&output.files) {
        let path = out_dir.join(&file.name);
        std::fs::write(&path, &file.contents).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// One row of `slots.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRow {
    pub run: u64,
    pub slot: u64,
    pub release_offset_us: i64,
    pub build_on_prev: bool,
    pub votes: u32,
    pub attesters: u32,
    pub attestation_share: f64,
    pub fresh_votes: u32,
    pub fresh_abstentions: u32,
    pub canonical: bool,
    pub proposer_payoff: f64,
    pub attester_payoff_total: u32,
    pub mean_arrival_offset_us: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: u64,
    pub seed: u64,
    pub canonical_slots: u64,
    pub total_proposer_payoff: f64,
    pub total_proposer_mev: f64,
    pub mean_attester_payoff: f64,
    pub attester_samples: u64,
    /// Sum of canonical release gaps and the span it must equal, µs.
    pub mev_gap_sum_us: i64,
    pub mev_span_us: i64,
}

fn simulate(params: &ProtocolParams, s: &SimulateSettings) -> Result<ExperimentOutput> {
    let config = SimConfig {
        params: params.clone(),
        default_proposer: s.proposer.clone(),
        proposer_overrides: s.proposer_overrides.clone(),
        attester_strategy: s.attester,
        attester_deviation: s.attester_deviation,
        record_level: s.record_level,
    };
    // A single run keeps the configured seed; replicates derive theirs from it.
    let traces = if s.runs == 1 {
        vec![crate::engine::run_simulation(&config)?]
    } else {
        run_replicates(&config, s.runs)?
    };

    let mut rows = Vec::new();
    let mut summaries = Vec::with_capacity(traces.len());
    for (run, trace) in traces.iter().enumerate() {
        let run = run as u64;
        for slot in &trace.slots {
            rows.push(SlotRow {
                run,
                slot: slot.slot,
                release_offset_us: slot.release_offset_us(&trace.params),
                build_on_prev: slot.proposer_action.build_on_prev,
                votes: slot.attestation_share.votes,
                attesters: slot.attestation_share.attesters,
                attestation_share: slot.attestation_share.value(),
                fresh_votes: slot.fresh_votes,
                fresh_abstentions: slot.fresh_abstentions,
                canonical: slot.canonical == Some(true),
                proposer_payoff: slot.proposer_payoff,
                attester_payoff_total: slot.attester_payoff_total,
                mean_arrival_offset_us: slot.mean_arrival_offset_us,
            });
        }
        let ledger = compute_payoffs(trace)?;
        let (gaps, span) = trace.mev_conservation()?;
        summaries.push(RunSummary {
            run,
            seed: trace.params.seed,
            canonical_slots: trace.slots.iter().filter(|s| s.canonical == Some(true)).count() as u64,
            total_proposer_payoff: ledger.total_proposer_payoff,
            total_proposer_mev: ledger.total_proposer_mev,
            mean_attester_payoff: ledger.mean_attester_payoff,
            attester_samples: ledger.attester_samples,
            mev_gap_sum_us: gaps as i64,
            mev_span_us: span as i64,
        });
    }
    let canonical: u64 = summaries.iter().map(|s| s.canonical_slots).sum();
    let mean_attester = summaries.iter().map(|s| s.mean_attester_payoff).sum::<f64>() / summaries.len() as f64;
    Ok(ExperimentOutput {
        headline: format!(
            "{} run(s), {} of {} slots canonical, mean attester payoff {:.4}",
            traces.len(),
            canonical,
            rows.len(),
            mean_attester
        ),
        files: vec![
            csv_file("slots.csv", &rows)?,
            json_file("summary.json", &summaries)?,
            json_file("traces.json", &traces)?,
        ],
    })
}

fn sweep(params: &ProtocolParams, s: &SweepSettings) -> Result<ExperimentOutput> {
    let rows = sweep_delta_star(params, &s.delta_star_us)?;
    let constant = rows.iter().all(|r| r.proposer_payoff_constant && r.proposer_payoff == rows[0].proposer_payoff);
    Ok(ExperimentOutput {
        headline: format!(
            "{} schedule offsets, proposer payoff {} ({:.6} ETH), all canonical: {}",
            rows.len(),
            if constant { "constant" } else { "varies" },
            rows[0].proposer_payoff,
            rows.iter().all(|r| r.all_canonical)
        ),
        files: vec![csv_file("sweep.csv", &rows)?],
    })
}

/// One row of `deviations.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub delta_star_us: i64,
    pub player: String,
    pub deviation: String,
    pub mean_payoff: f64,
    pub std_error: f64,
    pub samples: u64,
    pub baseline_payoff: f64,
    pub unprofitable: bool,
}

#[derive(Serialize)]
struct EquilibriumCheck<'a> {
    all_unprofitable: bool,
    /// Closed-form equilibrium attester payoff.
    attester_reference_payoff: f64,
    proposer: &'a [DeviationReport],
    attester: &'a [DeviationReport],
}

fn check_equilibrium(params: &ProtocolParams, s: &CheckEquilibriumSettings) -> Result<ExperimentOutput> {
    let mut proposer = Vec::new();
    let mut attester = Vec::new();
    for &d in &s.delta_star_us {
        let grid = proposer_deviation_grid(params, d, s.proposer_grid_points);
        proposer.push(check_proposer_deviation(params, d, &grid)?);
        attester.push(check_attester_deviation(params, d, s.attester_mc_samples)?);
    }
    let mut rows = Vec::new();
    for (player, reports) in [("proposer", &proposer), ("attester", &attester)] {
        for r in reports.iter() {
            for dev in &r.deviations {
                rows.push(DeviationRow {
                    delta_star_us: r.delta_star_us,
                    player: player.into(),
                    deviation: dev.descriptor.clone(),
                    mean_payoff: dev.mean_payoff,
                    std_error: dev.std_error,
                    samples: dev.samples,
                    baseline_payoff: r.baseline_payoff,
                    unprofitable: dev.is_unprofitable(r.baseline_payoff),
                });
            }
        }
    }
    let all = proposer.iter().chain(&attester).all(|r| r.all_unprofitable);
    let report = EquilibriumCheck {
        all_unprofitable: all,
        attester_reference_payoff: erlang2_cdf(params.slot_length_us, params.mean_latency_us),
        proposer: &proposer,
        attester: &attester,
    };
    Ok(ExperimentOutput {
        headline: format!(
            "{} deviations over {} schedule offsets, all unprofitable: {all}",
            rows.len(),
            s.delta_star_us.len()
        ),
        files: vec![csv_file("deviations.csv", &rows)?, json_file("report.json", &report)?],
    })
}

/// One row of `response.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub delay_us: i64,
    pub expected_payoff: f64,
    pub std_error: f64,
    pub attestation_share: f64,
    /// Large-committee share `1 - exp(-(D - d) / θ)`.
    pub expected_share: f64,
    pub canonical_rate: f64,
}

#[derive(Serialize)]
struct BestResponseReport {
    argmax_delay_us: i64,
    /// `D + θ ln(1 - γ)`; absent when γ = 1.
    optimal_delay_us: Option<i64>,
    distance_us: Option<i64>,
    step_us: i64,
    runs_per_point: u64,
    attester_count: u32,
}

fn best_response(params: &ProtocolParams, s: &BestResponseSettings) -> Result<ExperimentOutput> {
    let curve = best_response_delay(params, &s.grid()?, s.runs_per_point)?;
    let rows: Vec<ResponseRow> = (0..curve.delays_us.len())
        .map(|i| ResponseRow {
            delay_us: curve.delays_us[i],
            expected_payoff: curve.expected_payoffs[i],
            std_error: curve.payoff_std_errors[i],
            attestation_share: curve.attestation_shares[i],
            expected_share: expected_honest_share(params, curve.delays_us[i]),
            canonical_rate: curve.canonical_rates[i],
        })
        .collect();
    let optimal = optimal_delay(params).ok();
    let report = BestResponseReport {
        argmax_delay_us: curve.argmax_delay_us,
        optimal_delay_us: optimal,
        distance_us: optimal.map(|d| (curve.argmax_delay_us - d).abs()),
        step_us: s.step_us,
        runs_per_point: s.runs_per_point,
        attester_count: params.attester_count,
    };
    Ok(ExperimentOutput {
        headline: match optimal {
            Some(d) => format!(
                "best response {:.3} s (closed form {:.3} s)",
                curve.argmax_delay_us as f64 / 1e6,
                d as f64 / 1e6
            ),
            None => format!("best response {:.3} s", curve.argmax_delay_us as f64 / 1e6),
        },
        files: vec![csv_file("response.csv", &rows)?, json_file("report.json", &report)?],
    })
}

/// One row of `auctions.csv`; bid columns are empty for auctions without an eligible bid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionRow {
    pub slot: u64,
    pub get_header_ms: i64,
    pub signed_at_ms: Option<i64>,
    pub get_payload_ms: Option<i64>,
    pub builder_id: Option<u32>,
    pub value_eth: Option<f64>,
}

#[derive(Serialize)]
struct MvotReport {
    /// Planted slope when bids were generated.
    planted_eth_per_s: Option<f64>,
    fixed_effects: RegressionReport,
    pooled_ols: RegressionReport,
    empty_auctions: u64,
    median_signing_ms: Option<f64>,
}

fn mvot(s: &MvotSettings) -> Result<ExperimentOutput> {
    let (bids, planted) = match &s.input {
        Some(path) => (read_bids(path)?, None),
        None => (generate_bid_stream(&s.generator)?, Some(s.generator.mev_rate)),
    };
    let fe = estimate_mvot(&bids)?;
    let pooled = estimate_pooled_ols(&bids)?;
    let bins = residualized_bins(&bids, s.bin_ms)?;
    let outcomes = run_auctions(&bids, s.get_header_ms, &s.signing_delay_ms, s.generator.seed)?;
    let rows: Vec<AuctionRow> = outcomes
        .iter()
        .map(|o| match o {
            AuctionOutcome::Won(t) => AuctionRow {
                slot: t.slot,
                get_header_ms: t.get_header_ms,
                signed_at_ms: Some(t.signed_at_ms),
                get_payload_ms: Some(t.get_payload_ms),
                builder_id: Some(t.winning_bid.builder_id),
                value_eth: Some(t.winning_bid.value_eth),
            },
            AuctionOutcome::Empty { slot, get_header_ms } => AuctionRow {
                slot: *slot,
                get_header_ms: *get_header_ms,
                signed_at_ms: None,
                get_payload_ms: None,
                builder_id: None,
                value_eth: None,
            },
        })
        .collect();
    let mut signing: Vec<i64> = outcomes
        .iter()
        .filter_map(|o| o.timeline().map(|t| t.get_payload_ms - t.get_header_ms))
        .collect();
    signing.sort_unstable();
    let median_signing_ms = match signing.len() {
        0 => None,
        n if n % 2 == 1 => Some(signing[n / 2] as f64),
        n => Some((signing[n / 2 - 1] + signing[n / 2]) as f64 / 2.0),
    };

    let report = MvotReport {
        planted_eth_per_s: planted,
        empty_auctions: rows.iter().filter(|r| r.value_eth.is_none()).count() as u64,
        median_signing_ms,
        fixed_effects: fe,
        pooled_ols: pooled,
    };
    let mut files = vec![
        json_file("regression.json", &report)?,
        csv_file("residual_bins.csv", &bins)?,
        csv_file("auctions.csv", &rows)?,
    ];
    if s.export_bids {
        let mut jsonl = Vec::new();
        for bid in &bids {
            serde_json::to_writer(&mut jsonl, bid)?;
            jsonl.push(b'\n');
        }
        files.push(OutputFile {
            name: "bids.jsonl".into(),
            contents: jsonl,
        });
    }
    Ok(ExperimentOutput {
        headline: format!(
            "fixed effects {:.6} ETH/s (se {:.6}), pooled OLS {:.6} ETH/s over {} bids in {} slots",
            report.fixed_effects.slope_eth_per_s,
            report.fixed_effects.std_error,
            report.pooled_ols.slope_eth_per_s,
            report.fixed_effects.n_obs,
            report.fixed_effects.n_slots
        ),
        files,
    })
}

/// One row of `share_curve.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    /// Release offset (signing time for laggy proposers), ms.
    pub offset_ms: f64,
    pub share: f64,
    pub attestations: u64,
    pub std_error: f64,
    /// Large-committee share at `offset_ms`.
    pub expected_share: f64,
}

impl CurveRow {
    fn new(point: &CurvePoint, params: &ProtocolParams) -> Self {
        CurveRow {
            offset_ms: point.x,
            share: point.y,
            attestations: point.n,
            std_error: point.se,
            expected_share: expected_honest_share(params, (point.x * MICROS_PER_MILLI as f64).round() as i64),
        }
    }
}

#[derive(Serialize)]
struct CorrelationReport {
    slots: u64,
    /// Between release (signing) offset and mean block arrival at attesters.
    pearson_release_vs_arrival: f64,
}

fn curves(params: &ProtocolParams, s: &CurvesSettings) -> Result<ExperimentOutput> {
    let honest = SimConfig::honest_spec(params.clone());
    match s.mode {
        CurveMode::Offsets => {
            let mut rows = Vec::with_capacity(s.offsets_ms.len());
            for &offset in &s.offsets_ms {
                let cfg = honest.clone().with_default_proposer(ProposerStrategy::GreedyDelay {
                    delay_us: offset * MICROS_PER_MILLI,
                });
                let traces = run_replicates(&cfg, s.runs)?;
                let points = pooled_next_slot_share(&traces, s.bucket_ms)?;
                rows.extend(points.iter().map(|p| CurveRow::new(p, params)));
            }
            Ok(ExperimentOutput {
                headline: format!("{} share points over {} offsets", rows.len(), s.offsets_ms.len()),
                files: vec![csv_file("share_curve.csv", &rows)?],
            })
        }
        CurveMode::Laggy => {
            let cfg = honest.with_default_proposer(ProposerStrategy::Laggy {
                signing_delay_ms: s.signing_delay_ms,
            });
            let traces = run_replicates(&cfg, s.runs)?;
            let rows: Vec<CurveRow> = pooled_next_slot_share(&traces, s.bucket_ms)?
                .iter()
                .map(|p| CurveRow::new(p, params))
                .collect();
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for trace in &traces {
                let (x, y) = release_and_arrival_ms(trace);
                xs.extend(x);
                ys.extend(y);
            }
            let report = CorrelationReport {
                slots: xs.len() as u64,
                pearson_release_vs_arrival: pearson(&xs, &ys)?,
            };
            Ok(ExperimentOutput {
                headline: format!(
                    "{} share buckets, release/arrival correlation {:.4}",
                    rows.len(),
                    report.pearson_release_vs_arrival
                ),
                files: vec![csv_file("share_curve.csv", &rows)?, json_file("correlation.json", &report)?],
            })
        }
    }
}
