//! Seeded per-entity random streams and latency sampling.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by the run seed and a
//! stream id derived from `(role, slot)`. Entities within a slot (attesters) read
//! disjoint, fixed positions of that stream, so each draw depends only on
//! `(seed, role, slot, index)` and never on evaluation order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a stream is used for; part of the stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamRole {
    Proposer = 1,
    Inbound = 2,
    Outbound = 3,
    BidArrival = 4,
    BidValue = 5,
    BidValidation = 6,
    Signing = 7,
    SlotBaseline = 8,
}

const SLOT_BITS: u32 = 56;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, role: StreamRole, slot: u64) -> Self {
        RngStream {
            seed,
            stream_id: ((role as u64) << SLOT_BITS) | (slot & ((1 << SLOT_BITS) - 1)),
        }
    }

    /// Generator positioned at the start of the stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Generator positioned at the `index`-th 64-bit word, i.e. the state a sequential
    /// reader is in after `index` calls to `next_u64`.
    pub fn rng_at(&self, index: u64) -> ChaCha8Rng {
        let mut rng = self.rng();
        rng.set_word_pos(2 * index as u128);
        rng
    }
}

/// Seed for the `run`-th independent replicate of an experiment with base seed `seed`.
pub fn replicate_seed(seed: u64, run: u64) -> u64 {
    // splitmix64 finalizer over the combined value.
    let mut z = seed ^ run.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in `[0, 1)` from the top 53 bits of one word.
pub fn unit_draw<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF exponential latency with mean `theta_us`, rounded half-up to microseconds.
pub fn latency_from_uniform(u: f64, theta_us: i64) -> i64 {
    let x = -(theta_us as f64) * (-u).ln_1p();
    (x + 0.5).floor() as i64
}

pub fn sample_latency<R: RngCore + ?Sized>(rng: &mut R, theta_us: i64) -> i64 {
    latency_from_uniform(unit_draw(rng), theta_us)
}

/// Standard normal draw.
pub fn normal_draw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}
