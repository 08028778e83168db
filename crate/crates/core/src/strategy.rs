//! Proposer and attester strategies.
//!
//! The equilibrium profile has proposers release exactly `Δ*` into their slot and
//! extend the previous block only if it was not late; attesters vote for a block
//! (on arrival) only when the proposer followed both rules, and otherwise abstain at
//! the slot start. The honest-spec attester instead votes on arrival or abstains at
//! the attestation deadline, which is the environment in which a rational proposer
//! profits from delaying.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::LatencyDistribution;
use crate::model::{AttesterAction, ProposerAction};
use crate::params::{ProtocolParams, MICROS_PER_MILLI};

#[derive(Clone, Copy, Debug)]
pub struct ProposerContext<'a> {
    pub slot: u64,
    /// `None` only for slot 0.
    pub prev_proposer_action: Option<ProposerAction>,
    pub params: &'a ProtocolParams,
}

#[derive(Clone, Copy, Debug)]
pub struct AttesterContext<'a> {
    pub slot: u64,
    /// Attesters observe the proposer's true action.
    pub observed_proposer_action: ProposerAction,
    pub inbound_latency_us: i64,
    pub prev_proposer_action: Option<ProposerAction>,
    pub params: &'a ProtocolParams,
}

impl AttesterContext<'_> {
    pub fn block_arrival_us(&self) -> i64 {
        self.observed_proposer_action.release_time_us + self.inbound_latency_us
    }
}

/// Whether an on-schedule proposer in `slot` extends the previous block.
/// Genesis counts as on schedule.
pub fn scheduled_build_on_prev(slot: u64, prev: Option<&ProposerAction>, params: &ProtocolParams) -> bool {
    match (slot, prev) {
        (0, _) | (_, None) => true,
        (n, Some(prev)) => prev.release_time_us <= params.scheduled_release_us(n - 1),
    }
}

/// Whether `action` follows both the release-time and the build rule of the equilibrium.
pub fn conforms_to_schedule(
    slot: u64,
    action: &ProposerAction,
    prev: Option<&ProposerAction>,
    params: &ProtocolParams,
) -> bool {
    action.release_time_us == params.scheduled_release_us(slot)
        && action.build_on_prev == scheduled_build_on_prev(slot, prev, params)
}

pub fn equilibrium_proposer(ctx: &ProposerContext) -> ProposerAction {
    ProposerAction {
        build_on_prev: scheduled_build_on_prev(ctx.slot, ctx.prev_proposer_action.as_ref(), ctx.params),
        release_time_us: ctx.params.scheduled_release_us(ctx.slot),
    }
}

pub fn equilibrium_attester(ctx: &AttesterContext) -> AttesterAction {
    if conforms_to_schedule(
        ctx.slot,
        &ctx.observed_proposer_action,
        ctx.prev_proposer_action.as_ref(),
        ctx.params,
    ) {
        AttesterAction {
            vote: true,
            release_time_us: ctx.block_arrival_us(),
        }
    } else {
        AttesterAction {
            vote: false,
            release_time_us: ctx.params.slot_start_us(ctx.slot),
        }
    }
}

/// Votes as soon as the block arrives, or abstains at the deadline. Arrival exactly at
/// the deadline is in time.
pub fn honest_spec_attester(block_arrival_us: Option<i64>, ctx: &AttesterContext) -> AttesterAction {
    let deadline = ctx.params.deadline_us(ctx.slot);
    match block_arrival_us {
        Some(arrival) if arrival <= deadline => AttesterAction {
            vote: true,
            release_time_us: arrival,
        },
        _ => AttesterAction {
            vote: false,
            release_time_us: deadline,
        },
    }
}

/// Releases `delay_us` into the slot and always extends the previous block.
pub fn greedy_delay_proposer(delay_us: i64, ctx: &ProposerContext) -> ProposerAction {
    ProposerAction {
        build_on_prev: true,
        release_time_us: ctx.params.slot_start_us(ctx.slot) + delay_us,
    }
}

/// Releases after a sampled signing delay (milliseconds) from the slot start.
pub fn laggy_proposer<R: Rng + ?Sized>(
    signing_delay_ms: &LatencyDistribution,
    ctx: &ProposerContext,
    rng: &mut R,
) -> ProposerAction {
    let delay_us = (signing_delay_ms.sample(rng) * MICROS_PER_MILLI as f64 + 0.5).floor() as i64;
    greedy_delay_proposer(delay_us, ctx)
}

/// Latest release delay whose expected honest-spec attestation share
/// `1 - exp(-(D - d) / θ)` still reaches the vote threshold: `D + θ ln(1 - γ)`, floored at 0.
pub fn optimal_delay(params: &ProtocolParams) -> Result<i64> {
    if params.vote_threshold >= 1.0 {
        return Err(Error::UnreachableThreshold);
    }
    let d = params.attestation_deadline_us as f64
        + params.mean_latency_us as f64 * (-params.vote_threshold).ln_1p();
    Ok(d.max(0.0).round() as i64)
}

/// Expected honest-spec attestation share for a block released `delay_us` into the slot,
/// ignoring microsecond rounding.
pub fn expected_honest_share(params: &ProtocolParams, delay_us: i64) -> f64 {
    let slack = (params.attestation_deadline_us - delay_us) as f64;
    if slack < 0.0 {
        0.0
    } else {
        -(-slack / params.mean_latency_us as f64).exp_m1()
    }
}

/// Named proposer strategy, selectable from configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProposerStrategy {
    Equilibrium,
    /// Release at the slot start, always extend.
    HonestSpec,
    GreedyDelay { delay_us: i64 },
    Laggy { signing_delay_ms: LatencyDistribution },
    /// Arbitrary fixed action, used for deviation grids.
    Fixed { delay_us: i64, build_on_prev: bool },
}

impl ProposerStrategy {
    pub fn act<R: Rng + ?Sized>(&self, ctx: &ProposerContext, rng: &mut R) -> ProposerAction {
        match self {
            ProposerStrategy::Equilibrium => equilibrium_proposer(ctx),
            ProposerStrategy::HonestSpec => greedy_delay_proposer(0, ctx),
            ProposerStrategy::GreedyDelay { delay_us } => greedy_delay_proposer(*delay_us, ctx),
            ProposerStrategy::Laggy { signing_delay_ms } => laggy_proposer(signing_delay_ms, ctx, rng),
            ProposerStrategy::Fixed {
                delay_us,
                build_on_prev,
            } => ProposerAction {
                build_on_prev: *build_on_prev,
                release_time_us: ctx.params.slot_start_us(ctx.slot) + delay_us,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProposerStrategy::GreedyDelay { delay_us } if *delay_us < 0 => {
                Err(Error::config("greedy-delay delay_us must be non-negative"))
            }
            ProposerStrategy::Laggy { signing_delay_ms } => signing_delay_ms.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttesterStrategy {
    Equilibrium,
    HonestSpec,
}

impl AttesterStrategy {
    pub fn act(&self, ctx: &AttesterContext) -> AttesterAction {
        match self {
            AttesterStrategy::Equilibrium => equilibrium_attester(ctx),
            AttesterStrategy::HonestSpec => honest_spec_attester(Some(ctx.block_arrival_us()), ctx),
        }
    }
}

/// Unilateral departure of one attester from its strategy's action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AttesterDeviation {
    /// Vote the other way, releasing as early as feasible.
    FlipVote,
    /// Keep the vote but release `shift_us` later.
    DelayRelease { shift_us: i64 },
}

impl AttesterDeviation {
    pub fn validate(&self) -> Result<()> {
        match self {
            AttesterDeviation::DelayRelease { shift_us } if *shift_us == 0 => Err(Error::NotADeviation(
                "delay-release with zero shift is the prescribed action".into(),
            )),
            AttesterDeviation::DelayRelease { shift_us } if *shift_us < 0 => {
                Err(Error::config("delay-release shift must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, prescribed: AttesterAction, ctx: &AttesterContext) -> AttesterAction {
        match *self {
            AttesterDeviation::FlipVote => {
                if prescribed.vote {
                    AttesterAction {
                        vote: false,
                        release_time_us: ctx.params.slot_start_us(ctx.slot),
                    }
                } else {
                    AttesterAction {
                        vote: true,
                        release_time_us: ctx.block_arrival_us(),
                    }
                }
            }
            AttesterDeviation::DelayRelease { shift_us } => AttesterAction {
                vote: prescribed.vote,
                release_time_us: prescribed.release_time_us + shift_us,
            },
        }
    }

    pub fn describe(&self) -> String {
        match self {
            AttesterDeviation::FlipVote => "flip-vote".to_string(),
            AttesterDeviation::DelayRelease { shift_us } => format!("delay-release+{shift_us}us"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStream, StreamRole};

    const S: i64 = 1_000_000;

    fn params(offset: i64) -> ProtocolParams {
        ProtocolParams {
            schedule_offset_us: offset,
            ..Default::default()
        }
    }

    fn on_time(p: &ProtocolParams, slot: u64) -> ProposerAction {
        ProposerAction {
            build_on_prev: true,
            release_time_us: p.scheduled_release_us(slot),
        }
    }

    #[test]
    fn equilibrium_proposer_examples() {
        let p = params(2 * S);
        let ctx = ProposerContext {
            slot: 5,
            prev_proposer_action: Some(on_time(&p, 4)),
            params: &p,
        };
        assert_eq!(
            equilibrium_proposer(&ctx),
            ProposerAction {
                build_on_prev: true,
                release_time_us: 62 * S
            }
        );

        let mut late = on_time(&p, 4);
        late.release_time_us += 1;
        let ctx = ProposerContext {
            prev_proposer_action: Some(late),
            ..ctx
        };
        assert!(!equilibrium_proposer(&ctx).build_on_prev);

        let p0 = params(0);
        let ctx = ProposerContext {
            slot: 5,
            prev_proposer_action: Some(on_time(&p0, 4)),
            params: &p0,
        };
        assert_eq!(equilibrium_proposer(&ctx).release_time_us, 60 * S);

        let genesis = ProposerContext {
            slot: 0,
            prev_proposer_action: None,
            params: &p,
        };
        assert!(equilibrium_proposer(&genesis).build_on_prev);
    }

    fn attester_ctx<'a>(p: &'a ProtocolParams, observed: ProposerAction, delta: i64) -> AttesterContext<'a> {
        AttesterContext {
            slot: 5,
            observed_proposer_action: observed,
            inbound_latency_us: delta,
            prev_proposer_action: Some(on_time(p, 4)),
            params: p,
        }
    }

    #[test]
    fn equilibrium_attester_examples() {
        let p = params(2 * S);
        let conforming = on_time(&p, 5);
        let a = equilibrium_attester(&attester_ctx(&p, conforming, 300_000));
        assert_eq!(
            a,
            AttesterAction {
                vote: true,
                release_time_us: 62_300_000
            }
        );

        let mut late = conforming;
        late.release_time_us += 1_000;
        let a = equilibrium_attester(&attester_ctx(&p, late, 300_000));
        assert_eq!(
            a,
            AttesterAction {
                vote: false,
                release_time_us: 60 * S
            }
        );

        let early = ProposerAction {
            build_on_prev: true,
            release_time_us: 60 * S,
        };
        assert!(!equilibrium_attester(&attester_ctx(&p, early, 300_000)).vote);

        // A build-rule violation alone is a deviation.
        let skip = ProposerAction {
            build_on_prev: false,
            ..conforming
        };
        assert!(!equilibrium_attester(&attester_ctx(&p, skip, 300_000)).vote);
    }

    #[test]
    fn equilibrium_attester_accepts_justified_skip() {
        let p = params(2 * S);
        let mut late_prev = on_time(&p, 4);
        late_prev.release_time_us += 1;
        let skip = ProposerAction {
            build_on_prev: false,
            release_time_us: p.scheduled_release_us(5),
        };
        let ctx = AttesterContext {
            prev_proposer_action: Some(late_prev),
            ..attester_ctx(&p, skip, 10)
        };
        assert!(equilibrium_attester(&ctx).vote);
    }

    #[test]
    fn honest_spec_attester_examples() {
        let p = params(0);
        let ctx = attester_ctx(&p, on_time(&p, 5), 0);
        let start = 60 * S;
        let a = honest_spec_attester(Some(start + 3_900_000), &ctx);
        assert_eq!(
            a,
            AttesterAction {
                vote: true,
                release_time_us: start + 3_900_000
            }
        );
        assert!(honest_spec_attester(Some(start + 4 * S), &ctx).vote);
        assert_eq!(
            honest_spec_attester(Some(start + 4_001_000), &ctx),
            AttesterAction {
                vote: false,
                release_time_us: start + 4 * S
            }
        );
        assert!(!honest_spec_attester(None, &ctx).vote);
    }

    #[test]
    fn honest_spec_with_far_deadline_votes_on_arrival() {
        let p = ProtocolParams {
            attestation_deadline_us: i64::MAX / 4,
            ..params(0)
        };
        for delta in [0, 1, 5 * S, 100 * S] {
            let ctx = attester_ctx(&p, on_time(&p, 5), delta);
            let a = AttesterStrategy::HonestSpec.act(&ctx);
            assert!(a.vote);
            assert_eq!(a.release_time_us, ctx.block_arrival_us());
        }
    }

    #[test]
    fn greedy_and_laggy_examples() {
        let p = params(0);
        let ctx = ProposerContext {
            slot: 3,
            prev_proposer_action: None,
            params: &p,
        };
        assert_eq!(greedy_delay_proposer(3 * S, &ctx).release_time_us, 39 * S);
        let honest = ProposerStrategy::HonestSpec.act(&ctx, &mut RngStream::new(0, StreamRole::Proposer, 3).rng());
        assert_eq!(greedy_delay_proposer(0, &ctx), honest);
        assert_eq!(greedy_delay_proposer(12 * S, &ctx).release_time_us, 48 * S);

        let mut rng = RngStream::new(0, StreamRole::Proposer, 3).rng();
        let lag = laggy_proposer(&LatencyDistribution::Degenerate { value: 774.0 }, &ctx, &mut rng);
        assert_eq!(lag.release_time_us, 36 * S + 774_000);
        assert!(lag.build_on_prev);
        let zero = laggy_proposer(&LatencyDistribution::Degenerate { value: 0.0 }, &ctx, &mut rng);
        assert_eq!(zero, honest);
    }

    #[test]
    fn laggy_median_matches_configuration() {
        let p = params(0);
        let ctx = ProposerContext {
            slot: 0,
            prev_proposer_action: None,
            params: &p,
        };
        let dist = LatencyDistribution::default_signing();
        let mut rng = RngStream::new(5, StreamRole::Signing, 0).rng();
        let mut xs: Vec<i64> = (0..100_000)
            .map(|_| laggy_proposer(&dist, &ctx, &mut rng).release_time_us)
            .collect();
        xs.sort_unstable();
        let median_ms = (xs[49_999] + xs[50_000]) as f64 / 2.0 / 1000.0;
        assert!((median_ms / 418.0 - 1.0).abs() < 0.02, "{median_ms}");
    }

    #[test]
    fn optimal_delay_examples() {
        let p = params(0);
        assert_eq!(optimal_delay(&p).unwrap(), 3_306_853);
        let p = ProtocolParams {
            vote_threshold: 2.0 / 3.0,
            ..params(0)
        };
        assert_eq!(optimal_delay(&p).unwrap(), 2_901_388);
        let p = ProtocolParams {
            vote_threshold: 1e-12,
            ..params(0)
        };
        assert_eq!(optimal_delay(&p).unwrap(), 4 * S);
        let p = ProtocolParams {
            vote_threshold: 1.0,
            attester_count: 10,
            ..params(0)
        };
        assert!(matches!(optimal_delay(&p), Err(Error::UnreachableThreshold)));
        // Thresholds unreachable even at the slot start clamp to zero.
        let p = ProtocolParams {
            vote_threshold: 0.999,
            ..params(0)
        };
        assert_eq!(optimal_delay(&p).unwrap(), 0);
    }

    #[test]
    fn optimal_delay_meets_threshold_exactly() {
        for gamma in [0.1, 0.5, 2.0 / 3.0, 0.9] {
            let p = ProtocolParams {
                vote_threshold: gamma,
                ..params(0)
            };
            let d = optimal_delay(&p).unwrap();
            assert!((expected_honest_share(&p, d) - gamma).abs() < 1e-6);
        }
    }

    #[test]
    fn attester_deviation_guards() {
        assert!(matches!(
            AttesterDeviation::DelayRelease { shift_us: 0 }.validate(),
            Err(Error::NotADeviation(_))
        ));
        AttesterDeviation::FlipVote.validate().unwrap();
    }

    #[test]
    fn flip_respects_arrival_constraint() {
        let p = params(2 * S);
        let mut late = on_time(&p, 5);
        late.release_time_us += 7;
        let ctx = attester_ctx(&p, late, 1234);
        let prescribed = equilibrium_attester(&ctx);
        let flipped = AttesterDeviation::FlipVote.apply(prescribed, &ctx);
        assert!(flipped.vote);
        assert!(flipped.release_time_us >= ctx.block_arrival_us());
    }
}
