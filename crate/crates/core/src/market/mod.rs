//! Synthetic MEV-Boost style block auction.
//!
//! Builders stream bids for slot `n` from late in slot `n-1`; each bid's value grows
//! linearly with its relay receive time on top of a slot-level baseline. The proposer
//! calls `getHeader`, takes the best bid already eligible at that moment, and its signed
//! header comes back after a signing delay. The marginal value of time is recovered by
//! regressing bid value on receive time within slots.

mod auction;
mod bids;
pub mod io;
mod regression;

pub use auction::{run_auction_timeline, run_auctions, AuctionOutcome, AuctionTimeline};
pub use bids::{generate_bid_stream, ArrivalShape, BidRecord, BidStreamConfig, SlotBaseline};
pub use regression::{estimate_mvot, estimate_pooled_ols, residualized_bins, RegressionReport, ResidualBin};
