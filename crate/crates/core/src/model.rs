//! Game primitives: actions, slot records and the pure payoff / canonicality rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ProtocolParams;

/// What a proposer does in its slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposerAction {
    /// Whether the block extends the previous slot's block.
    pub build_on_prev: bool,
    /// Absolute release time.
    pub release_time_us: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttesterAction {
    pub vote: bool,
    /// Absolute release time of the attestation.
    pub release_time_us: i64,
}

/// Votes for one slot's block out of the slot's attesters, kept as an exact ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationShare {
    pub votes: u32,
    pub attesters: u32,
}

impl AttestationShare {
    pub fn value(&self) -> f64 {
        self.votes as f64 / self.attesters as f64
    }

    /// Inclusive threshold comparison. `votes / attesters` is correctly rounded, so two
    /// distinct ratios with denominator at most 2^26 never collapse onto the same f64.
    pub fn meets(&self, vote_threshold: f64) -> bool {
        self.value() >= vote_threshold
    }
}

/// Fraction of a slot's attesters voting for its block.
pub fn attestation_share(votes: &[bool]) -> Result<AttestationShare> {
    if votes.is_empty() {
        return Err(Error::config("attestation share needs at least one attester"));
    }
    Ok(AttestationShare {
        votes: votes.iter().filter(|v| **v).count() as u32,
        attesters: votes.len() as u32,
    })
}

/// A block is canonical iff the next proposer builds on it and its share reaches `vote_threshold`.
pub fn canonical_status(build_on_prev_next: bool, attestation_share: f64, vote_threshold: f64) -> bool {
    build_on_prev_next && attestation_share >= vote_threshold
}

/// Most recent canonical block before some slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CanonicalAnchor {
    Genesis,
    Slot(u64),
}

/// Most recent `k < n` with `canonical_flags[k]`, or [`CanonicalAnchor::Genesis`].
pub fn last_canonical_slot(canonical_flags: &[bool], n: u64) -> CanonicalAnchor {
    let end = (n as usize).min(canonical_flags.len());
    canonical_flags[..end]
        .iter()
        .rposition(|c| *c)
        .map_or(CanonicalAnchor::Genesis, |k| CanonicalAnchor::Slot(k as u64))
}

/// Base reward plus MEV accrued since the last canonical block, paid only if canonical.
pub fn proposer_payoff(
    release_time_us: i64,
    last_canonical_time_us: i64,
    canonical: bool,
    params: &ProtocolParams,
) -> f64 {
    if !canonical {
        return 0.0;
    }
    params.base_reward + params.mev_accrued((release_time_us - last_canonical_time_us).max(0))
}

/// 1 iff the vote matches the block's fate, reached the next proposer before its release,
/// and the next block is itself canonical.
pub fn attester_payoff(
    vote: bool,
    chi_n: bool,
    tau_us: i64,
    outbound_latency_us: i64,
    next_release_us: i64,
    chi_next: bool,
) -> u8 {
    let correct = vote == chi_n;
    let fresh = tau_us + outbound_latency_us <= next_release_us;
    u8::from(correct && fresh && chi_next)
}

/// Per-attester detail, present only for full-detail traces.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttesterDetail {
    pub actions: Vec<AttesterAction>,
    pub inbound_latencies_us: Vec<i64>,
    pub outbound_latencies_us: Vec<i64>,
    pub payoffs: Vec<u8>,
}

/// One slot's full resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub proposer_action: ProposerAction,
    pub attestation_share: AttestationShare,
    /// Votes for the block that reached the next proposer in time.
    pub fresh_votes: u32,
    /// Abstentions that reached the next proposer in time.
    pub fresh_abstentions: u32,
    /// `None` until the next proposer has acted.
    pub canonical: Option<bool>,
    pub proposer_payoff: f64,
    /// Number of this slot's attesters earning a payoff of 1.
    pub attester_payoff_total: u32,
    /// Mean arrival offset of the block at attesters, relative to slot start.
    pub mean_arrival_offset_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<AttesterDetail>,
}

impl SlotRecord {
    pub fn release_offset_us(&self, params: &ProtocolParams) -> i64 {
        self.proposer_action.release_time_us - params.slot_start_us(self.slot)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub params: ProtocolParams,
    pub slots: Vec<SlotRecord>,
    pub genesis_time_us: i64,
    /// Virtual proposer that closes the horizon; treated as canonical.
    pub closing_action: ProposerAction,
}

impl SimulationTrace {
    pub fn canonical_flags(&self) -> Result<Vec<bool>> {
        self.slots
            .iter()
            .map(|s| s.canonical.ok_or(Error::Unresolved { slot: s.slot }))
            .collect()
    }

    pub fn anchor_time_us(&self, anchor: CanonicalAnchor) -> i64 {
        match anchor {
            CanonicalAnchor::Genesis => self.genesis_time_us,
            CanonicalAnchor::Slot(k) => self.slots[k as usize].proposer_action.release_time_us,
        }
    }

    /// Release time of the block built after `slot` (the closing proposer after the last slot).
    pub fn next_action(&self, slot: usize) -> &ProposerAction {
        self.slots
            .get(slot + 1)
            .map_or(&self.closing_action, |s| &s.proposer_action)
    }

    /// Checks that the canonical release-time gaps telescope to the whole chain's span.
    ///
    /// Returns `(sum of gaps, last canonical time - genesis time)`.
    pub fn mev_conservation(&self) -> Result<(i128, i128)> {
        let flags = self.canonical_flags()?;
        let mut sum: i128 = 0;
        let mut last = self.genesis_time_us;
        for (n, slot) in self.slots.iter().enumerate() {
            if flags[n] {
                let anchor = last_canonical_slot(&flags, n as u64);
                sum += (slot.proposer_action.release_time_us - self.anchor_time_us(anchor)) as i128;
                last = slot.proposer_action.release_time_us;
            }
        }
        Ok((sum, last as i128 - self.genesis_time_us as i128))
    }
}
