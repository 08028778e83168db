use proptest::prelude::*;
use timing_core::analytics::{next_slot_share, pearson, pooled_next_slot_share, release_and_arrival_ms};
use timing_core::engine::{run_replicates, run_simulation, SimConfig};
use timing_core::lab::{best_response_delay, check_attester_deviations};
use timing_core::latency::LatencyDistribution;
use timing_core::market::{generate_bid_stream, run_auctions, BidStreamConfig};
use timing_core::rng::{normal_draw, RngStream, StreamRole};
use timing_core::strategy::{optimal_delay, AttesterDeviation, ProposerStrategy};
use timing_core::ProtocolParams;

const S: i64 = 1_000_000;

fn honest(offset_us: i64, slots: u64, attesters: u32, seed: u64) -> SimConfig {
    SimConfig::honest_spec(ProtocolParams {
        horizon_slots: slots,
        attester_count: attesters,
        seed,
        ..Default::default()
    })
    .with_default_proposer(ProposerStrategy::GreedyDelay { delay_us: offset_us })
}

#[test]
fn share_at_two_seconds() {
    // 100 slots x 1000 attesters = 1e5 attester draws.
    let trace = run_simulation(&honest(2 * S, 100, 1000, 8)).unwrap();
    let point = &next_slot_share(&trace, 100).unwrap()[0];
    let expected = 1.0 - (-2.0f64).exp();
    assert!((expected - 0.8647).abs() < 1e-4);
    let se = (expected * (1.0 - expected) / point.n as f64).sqrt();
    assert!((point.y - expected).abs() < 4.0 * se, "{} vs {expected}", point.y);
}

#[test]
fn share_flat_then_falls_to_zero() {
    let at = |offset_us| {
        let traces = run_replicates(&honest(offset_us, 5, 500, 1), 10).unwrap();
        pooled_next_slot_share(&traces, 100).unwrap()[0].clone()
    };
    let early = at(0);
    assert!(early.y > 0.97);
    assert_eq!(at(4 * S).y, 0.0);
    assert_eq!(at(6 * S).y, 0.0);
    let mut prev = early;
    for offset in (250_000..=4 * S).step_by(250_000) {
        let point = at(offset);
        assert!(point.y <= prev.y + 3.0 * (prev.se + point.se), "{offset}: {} > {}", point.y, prev.y);
        prev = point;
    }
}

#[test]
fn attenuated_correlation_matches_closed_form() {
    let signing = LatencyDistribution::default_signing();
    let mut rng = RngStream::new(5, StreamRole::Signing, 0).rng();
    let jitter_sd = 20.0;
    let n = 20_000;
    let signed: Vec<f64> = (0..n).map(|_| signing.sample(&mut rng)).collect();
    let seen: Vec<f64> = signed.iter().map(|s| s + jitter_sd * normal_draw(&mut rng)).collect();
    let mean = signed.iter().sum::<f64>() / n as f64;
    let sd = (signed.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let predicted = sd / (sd * sd + jitter_sd * jitter_sd).sqrt();
    let r = pearson(&signed, &seen).unwrap();
    assert!(r > 0.95);
    assert!((r - predicted).abs() < 0.005, "{r} vs {predicted}");
}

#[test]
fn laggy_release_correlates_with_arrival() {
    let cfg = SimConfig::honest_spec(ProtocolParams {
        horizon_slots: 300,
        attester_count: 1000,
        ..Default::default()
    })
    .with_default_proposer(ProposerStrategy::Laggy {
        signing_delay_ms: LatencyDistribution::default_signing(),
    });
    let trace = run_simulation(&cfg).unwrap();
    let (release, arrival) = release_and_arrival_ms(&trace);
    assert!(pearson(&release, &arrival).unwrap() > 0.95);
}

fn br_params(attesters: u32) -> ProtocolParams {
    ProtocolParams {
        attester_count: attesters,
        seed: 21,
        ..Default::default()
    }
}

#[test]
fn argmax_invariant_to_payoff_scaling() {
    let grid: Vec<i64> = (0..=80).map(|k| k * 50_000).collect();
    let p = br_params(2000);
    let scaled = ProtocolParams {
        base_reward: p.base_reward * 3.5,
        mev_rate: p.mev_rate * 3.5,
        ..p.clone()
    };
    let a = best_response_delay(&p, &grid, 8).unwrap();
    let b = best_response_delay(&scaled, &grid, 8).unwrap();
    assert_eq!(a.argmax_delay_us, b.argmax_delay_us);
}

#[test]
fn response_rises_then_collapses() {
    let p = br_params(2000);
    let d_star = optimal_delay(&p).unwrap();
    let margin = 300_000;
    let grid: Vec<i64> = (0..=80).map(|k| k * 50_000).collect();
    let curve = best_response_delay(&p, &grid, 8).unwrap();
    for i in 1..grid.len() {
        if grid[i] <= d_star - margin {
            assert!(curve.expected_payoffs[i] >= curve.expected_payoffs[i - 1], "{}", grid[i]);
        }
    }
    assert_eq!(*curve.expected_payoffs.last().unwrap(), 0.0);
    assert_eq!(*curve.attestation_shares.last().unwrap(), 0.0);
}

#[test]
fn late_attestation_forfeits_freshness() {
    // Δ = 2θ so that a half-second delay visibly shrinks the freshness window.
    let p = ProtocolParams {
        mean_latency_us: 6 * S,
        attestation_deadline_us: 0,
        attester_count: 50,
        ..Default::default()
    };
    let report = check_attester_deviations(
        &p,
        3 * S,
        20_000,
        &[
            AttesterDeviation::DelayRelease { shift_us: S / 2 },
            AttesterDeviation::DelayRelease { shift_us: p.slot_length_us },
        ],
    )
    .unwrap();
    // Erlang-2 CDF at the shortened window (11.5 s) with θ = 6 s.
    let x = 11.5 / 6.0;
    let expected = 1.0 - (-x as f64).exp() * (1.0 + x);
    let late = &report.deviations[0];
    assert!((late.mean_payoff - expected).abs() < 4.0 * late.std_error, "{} vs {expected}", late.mean_payoff);
    assert!(late.mean_payoff < report.baseline_payoff);
    assert_eq!(report.deviations[1].mean_payoff, 0.0);
    assert!(report.all_unprofitable);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn auction_timelines_are_ordered(seed: u64, get_header_ms in -2000i64..2000) {
        let bids = generate_bid_stream(&BidStreamConfig { n_slots: 4, bids_per_slot: 50, seed, ..Default::default() }).unwrap();
        for outcome in run_auctions(&bids, get_header_ms, &LatencyDistribution::default_signing(), seed).unwrap() {
            if let Some(t) = outcome.timeline() {
                prop_assert!(t.get_header_ms <= t.signed_at_ms && t.signed_at_ms <= t.get_payload_ms);
                prop_assert!(t.winning_bid.eligible_at_ms <= get_header_ms);
            }
        }
    }

    #[test]
    fn equilibrium_payoff_is_schedule_invariant(offset in 0i64..=12 * S, seed: u64) {
        let p = ProtocolParams { schedule_offset_us: offset, horizon_slots: 12, attester_count: 20, seed, ..Default::default() };
        let expected = p.equilibrium_proposer_payoff();
        let trace = run_simulation(&SimConfig::equilibrium(p)).unwrap();
        prop_assert!(trace.slots.iter().all(|s| s.canonical == Some(true) && s.proposer_payoff == expected));
    }
}
