//! Exogenous constants of the timing game.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MICROS_PER_SECOND: i64 = 1_000_000;
pub const MICROS_PER_MILLI: i64 = 1_000;

/// All exogenous constants of one game instance. Times are integer microseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParams {
    /// Slot length.
    pub slot_length_us: i64,
    /// Within-slot release time attesters coordinate on enforcing.
    pub schedule_offset_us: i64,
    /// Mean one-hop network latency.
    pub mean_latency_us: i64,
    /// Fraction of attesters required for a block to be canonical.
    pub vote_threshold: f64,
    /// Fixed reward of a canonical block, in ETH.
    pub base_reward: f64,
    /// MEV accrual rate, in ETH per second.
    pub mev_rate: f64,
    /// Honest attesters vote no later than this offset into the slot.
    pub attestation_deadline_us: i64,
    pub attester_count: u32,
    pub horizon_slots: u64,
    pub seed: u64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            slot_length_us: 12 * MICROS_PER_SECOND,
            schedule_offset_us: 0,
            mean_latency_us: MICROS_PER_SECOND,
            vote_threshold: 0.5,
            base_reward: 0.04,
            mev_rate: 0.0065,
            attestation_deadline_us: 4 * MICROS_PER_SECOND,
            attester_count: 1000,
            horizon_slots: 100,
            seed: 0,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        if self.mean_latency_us <= 0 {
            return Err(Error::config("mean_latency_us must be positive"));
        }
        if self.slot_length_us < 2 * self.mean_latency_us {
            return Err(Error::config(format!(
                "slot_length_us ({}) must be at least twice mean_latency_us ({})",
                self.slot_length_us, self.mean_latency_us
            )));
        }
        if !(0..=self.slot_length_us).contains(&self.schedule_offset_us) {
            return Err(Error::config(format!(
                "schedule_offset_us ({}) must lie in [0, {}]",
                self.schedule_offset_us, self.slot_length_us
            )));
        }
        if !(self.vote_threshold > 0.0 && self.vote_threshold <= 1.0) {
            return Err(Error::config("vote_threshold must lie in (0, 1]"));
        }
        if !(self.base_reward > 0.0 && self.base_reward.is_finite()) {
            return Err(Error::config("base_reward must be positive"));
        }
        if !(self.mev_rate > 0.0 && self.mev_rate.is_finite()) {
            return Err(Error::config("mev_rate must be positive"));
        }
        if self.attestation_deadline_us < 0 {
            return Err(Error::config("attestation_deadline_us must be non-negative"));
        }
        if self.horizon_slots == 0 {
            return Err(Error::config("horizon_slots must be positive"));
        }
        let min_attesters = self.min_attester_count();
        if self.attester_count < min_attesters {
            return Err(Error::config(format!(
                "attester_count ({}) must be at least {} for vote_threshold {} \
                 so that one vote cannot move the share across the threshold",
                self.attester_count, min_attesters, self.vote_threshold
            )));
        }
        Ok(())
    }

    /// Smallest attester count satisfying the single-vote margin: `ceil(1 / (1 - γ)) + 1`.
    pub fn min_attester_count(&self) -> u32 {
        if self.vote_threshold >= 1.0 {
            return 1;
        }
        // 1/(1 - 2/3) evaluates to 3.0000000000000004 in f64.
        let ratio = 1.0 / (1.0 - self.vote_threshold);
        (ratio - 1e-9).ceil() as u32 + 1
    }

    pub fn slot_start_us(&self, slot: u64) -> i64 {
        slot as i64 * self.slot_length_us
    }

    /// Time at which on-schedule proposers release in `slot`.
    pub fn scheduled_release_us(&self, slot: u64) -> i64 {
        self.slot_start_us(slot) + self.schedule_offset_us
    }

    /// Release time of the virtual canonical block preceding slot 0.
    pub fn genesis_time_us(&self) -> i64 {
        self.schedule_offset_us - self.slot_length_us
    }

    pub fn deadline_us(&self, slot: u64) -> i64 {
        self.slot_start_us(slot) + self.attestation_deadline_us
    }

    /// MEV accrued over `elapsed_us`, in ETH.
    pub fn mev_accrued(&self, elapsed_us: i64) -> f64 {
        self.mev_rate * (elapsed_us as f64 / MICROS_PER_SECOND as f64)
    }

    /// Proposer payoff for a canonical block released exactly one slot after its predecessor.
    pub fn equilibrium_proposer_payoff(&self) -> f64 {
        self.base_reward + self.mev_accrued(self.slot_length_us)
    }
}
