use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bids::BidRecord;
use crate::error::{Error, Result};
use crate::latency::LatencyDistribution;
use crate::rng::{RngStream, StreamRole};

/// Event times of one slot's auction, ms relative to the slot boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionTimeline {
    pub slot: u64,
    pub get_header_ms: i64,
    pub signed_at_ms: i64,
    /// The signed header travels with the payload request, so this equals `signed_at_ms`.
    pub get_payload_ms: i64,
    pub winning_bid: BidRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum AuctionOutcome {
    Won(AuctionTimeline),
    /// No bid was eligible at `getHeader`; the slot proceeds without an external bid.
    Empty { slot: u64, get_header_ms: i64 },
}

impl AuctionOutcome {
    pub fn timeline(&self) -> Option<&AuctionTimeline> {
        match self {
            AuctionOutcome::Won(t) => Some(t),
            AuctionOutcome::Empty { .. } => None,
        }
    }
}

/// Higher value wins; ties go to the earlier receipt, then the lower builder id.
fn preference(a: &BidRecord, b: &BidRecord) -> Ordering {
    a.value_eth
        .total_cmp(&b.value_eth)
        .then_with(|| b.received_at_ms.cmp(&a.received_at_ms))
        .then_with(|| b.builder_id.cmp(&a.builder_id))
        .then_with(|| b.eligible_at_ms.cmp(&a.eligible_at_ms))
}

/// Resolves one slot's auction: best bid eligible by `get_header_ms`, then a sampled
/// signing delay (ms, rounded half-up).
pub fn run_auction_timeline<R: Rng + ?Sized>(
    slot: u64,
    bids: &[BidRecord],
    get_header_ms: i64,
    signing_delay_ms: &LatencyDistribution,
    rng: &mut R,
) -> Result<AuctionOutcome> {
    if let Some(stray) = bids.iter().find(|b| b.slot != slot) {
        return Err(Error::config(format!(
            "bid for slot {} passed to the auction of slot {slot}",
            stray.slot
        )));
    }
    let winner = bids
        .iter()
        .filter(|b| b.eligible_at_ms <= get_header_ms)
        .max_by(|a, b| preference(a, b));
    let Some(winner) = winner else {
        return Ok(AuctionOutcome::Empty { slot, get_header_ms });
    };
    let signed_at_ms = get_header_ms + signing_delay_ms.sample_rounded(rng);
    Ok(AuctionOutcome::Won(AuctionTimeline {
        slot,
        get_header_ms,
        signed_at_ms,
        get_payload_ms: signed_at_ms,
        winning_bid: winner.clone(),
    }))
}

/// Runs every slot's auction in slot order, drawing slot `n`'s signing delay from its own stream.
pub fn run_auctions(
    bids: &[BidRecord],
    get_header_ms: i64,
    signing_delay_ms: &LatencyDistribution,
    seed: u64,
) -> Result<Vec<AuctionOutcome>> {
    signing_delay_ms.validate()?;
    let mut by_slot: BTreeMap<u64, Vec<BidRecord>> = BTreeMap::new();
    for bid in bids {
        by_slot.entry(bid.slot).or_default().push(bid.clone());
    }
    by_slot
        .iter()
        .map(|(slot, slot_bids)| {
            let mut rng = RngStream::new(seed, StreamRole::Signing, *slot).rng();
            run_auction_timeline(*slot, slot_bids, get_header_ms, signing_delay_ms, &mut rng)
        })
        .collect()
}
