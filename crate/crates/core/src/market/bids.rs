use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latency::LatencyDistribution;
use crate::rng::{normal_draw, unit_draw, RngStream, StreamRole};

/// One builder bid as logged by the relay. Times are milliseconds relative to the
/// boundary of the bid's slot (negative: during the previous slot).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BidRecord {
    pub slot: u64,
    pub builder_id: u32,
    pub received_at_ms: i64,
    pub eligible_at_ms: i64,
    pub value_eth: f64,
}

impl BidRecord {
    pub fn validate(&self) -> Result<()> {
        if self.eligible_at_ms < self.received_at_ms {
            return Err(Error::config(format!(
                "slot {} builder {}: eligible_at_ms {} precedes received_at_ms {}",
                self.slot, self.builder_id, self.eligible_at_ms, self.received_at_ms
            )));
        }
        if !(self.value_eth >= 0.0 && self.value_eth.is_finite()) {
            return Err(Error::config(format!(
                "slot {} builder {}: value_eth must be a non-negative number",
                self.slot, self.builder_id
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalShape {
    #[default]
    Uniform,
    /// Density rising linearly from the window start to its end.
    TriangularRamp,
}

/// How each slot's baseline bid level (the slot fixed effect) is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SlotBaseline {
    /// `floor_eth` plus an independent draw from `spread` (in ETH).
    Independent { floor_eth: f64, spread: LatencyDistribution },
    /// `floor_eth + eth_per_s * mean receive time (s)`: baselines that co-move with
    /// the slot's bid timing and bias pooled OLS.
    TimestampCorrelated { floor_eth: f64, eth_per_s: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BidStreamConfig {
    pub n_slots: u64,
    pub bids_per_slot: u32,
    /// Planted marginal value of time, ETH per second.
    pub mev_rate: f64,
    pub baseline: SlotBaseline,
    pub noise_sd_eth: f64,
    /// Inclusive receive-time window, ms.
    pub arrival_window_ms: (i64, i64),
    #[serde(default)]
    pub arrival_shape: ArrivalShape,
    /// Each slot's window is shifted by a uniform integer in `[-jitter, jitter]`.
    #[serde(default)]
    pub window_jitter_ms: i64,
    /// Relay validation time between receipt and eligibility, ms.
    pub relay_validation_ms: LatencyDistribution,
    pub builders: u32,
    pub seed: u64,
}

impl Default for BidStreamConfig {
    fn default() -> Self {
        BidStreamConfig {
            n_slots: 100,
            bids_per_slot: 800,
            mev_rate: 0.0065,
            baseline: SlotBaseline::Independent {
                floor_eth: 0.1,
                spread: LatencyDistribution::Exponential { mean: 0.05 },
            },
            noise_sd_eth: 0.01,
            arrival_window_ms: (-4_000, 1_000),
            arrival_shape: ArrivalShape::Uniform,
            window_jitter_ms: 0,
            relay_validation_ms: LatencyDistribution::Lognormal {
                median: 100.0,
                sigma: 0.5,
            },
            builders: 20,
            seed: 0,
        }
    }
}

impl BidStreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bids_per_slot == 0 {
            return Err(Error::config("bids_per_slot must be positive"));
        }
        if self.builders == 0 {
            return Err(Error::config("builders must be positive"));
        }
        let (lo, hi) = self.arrival_window_ms;
        if lo >= hi {
            return Err(Error::config(format!("arrival window ({lo}, {hi}) is empty")));
        }
        if !(self.noise_sd_eth >= 0.0) {
            return Err(Error::config("noise_sd_eth must be non-negative"));
        }
        if self.window_jitter_ms < 0 {
            return Err(Error::config("window_jitter_ms must be non-negative"));
        }
        if !self.mev_rate.is_finite() {
            return Err(Error::config("mev_rate must be finite"));
        }
        self.relay_validation_ms.validate()?;
        if let SlotBaseline::Independent { spread, .. } = &self.baseline {
            spread.validate()?;
        }
        Ok(())
    }
}

fn uniform_int<R: Rng + ?Sized>(rng: &mut R, lo: i64, hi: i64) -> i64 {
    lo + (unit_draw(rng) * (hi - lo + 1) as f64).floor() as i64
}

/// Generates `n_slots * bids_per_slot` bids:
/// `value = baseline(slot) + mev_rate * received_at_s + N(0, noise_sd)`, floored at 0.
pub fn generate_bid_stream(config: &BidStreamConfig) -> Result<Vec<BidRecord>> {
    config.validate()?;
    let per_slot = config.bids_per_slot as usize;
    let mut bids = Vec::with_capacity(config.n_slots as usize * per_slot);
    for slot in 0..config.n_slots {
        let mut arrival_rng = RngStream::new(config.seed, StreamRole::BidArrival, slot).rng();
        let mut value_rng = RngStream::new(config.seed, StreamRole::BidValue, slot).rng();
        let mut validation_rng = RngStream::new(config.seed, StreamRole::BidValidation, slot).rng();
        let mut baseline_rng = RngStream::new(config.seed, StreamRole::SlotBaseline, slot).rng();

        let shift = if config.window_jitter_ms > 0 {
            uniform_int(&mut baseline_rng, -config.window_jitter_ms, config.window_jitter_ms)
        } else {
            0
        };
        let (lo, hi) = (config.arrival_window_ms.0 + shift, config.arrival_window_ms.1 + shift);
        let received: Vec<i64> = (0..per_slot)
            .map(|_| match config.arrival_shape {
                ArrivalShape::Uniform => uniform_int(&mut arrival_rng, lo, hi),
                ArrivalShape::TriangularRamp => {
                    let x = lo as f64 + (hi - lo) as f64 * unit_draw(&mut arrival_rng).sqrt();
                    (x.round() as i64).clamp(lo, hi)
                }
            })
            .collect();

        let baseline = match config.baseline {
            SlotBaseline::Independent { floor_eth, spread } => floor_eth + spread.sample(&mut baseline_rng),
            SlotBaseline::TimestampCorrelated { floor_eth, eth_per_s } => {
                let mean_ms = received.iter().sum::<i64>() as f64 / per_slot as f64;
                floor_eth + eth_per_s * (mean_ms / 1000.0)
            }
        };

        for received_at_ms in received {
            let builder_id = (unit_draw(&mut value_rng) * config.builders as f64) as u32;
            let noise = if config.noise_sd_eth > 0.0 {
                config.noise_sd_eth * normal_draw(&mut value_rng)
            } else {
                0.0
            };
            let value = baseline + config.mev_rate * (received_at_ms as f64 / 1000.0) + noise;
            bids.push(BidRecord {
                slot,
                builder_id,
                received_at_ms,
                eligible_at_ms: received_at_ms + config.relay_validation_ms.sample_rounded(&mut validation_rng),
                value_eth: value.max(0.0),
            });
        }
    }
    Ok(bids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless(mev_rate: f64) -> BidStreamConfig {
        BidStreamConfig {
            n_slots: 5,
            bids_per_slot: 50,
            mev_rate,
            noise_sd_eth: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_values_are_linear_in_time() {
        let bids = generate_bid_stream(&noiseless(0.0065)).unwrap();
        for slot in bids.chunk_by(|a, b| a.slot == b.slot) {
            let a = &slot[0];
            for b in &slot[1..] {
                let dt = (b.received_at_ms - a.received_at_ms) as f64 / 1000.0;
                assert!((b.value_eth - a.value_eth - 0.0065 * dt).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn flat_market_has_equal_values() {
        let cfg = BidStreamConfig {
            baseline: SlotBaseline::Independent {
                floor_eth: 0.2,
                spread: LatencyDistribution::Degenerate { value: 0.0 },
            },
            ..noiseless(0.0)
        };
        let bids = generate_bid_stream(&cfg).unwrap();
        assert!(bids.iter().all(|b| b.value_eth == 0.2));
    }

    #[test]
    fn defaults_respect_count_and_window() {
        let cfg = BidStreamConfig {
            n_slots: 3,
            ..Default::default()
        };
        let bids = generate_bid_stream(&cfg).unwrap();
        assert_eq!(bids.len(), 3 * 800);
        for slot in 0..3 {
            assert_eq!(bids.iter().filter(|b| b.slot == slot).count(), 800);
        }
        assert!(bids.iter().all(|b| (-4_000..=1_000).contains(&b.received_at_ms)));
        assert!(bids.iter().all(|b| b.validate().is_ok()));
        // The whole window is covered.
        let big = generate_bid_stream(&BidStreamConfig {
            n_slots: 20,
            ..Default::default()
        })
        .unwrap();
        assert!(big.iter().any(|b| b.received_at_ms <= -3_990));
        assert!(big.iter().any(|b| b.received_at_ms >= 990));
    }

    #[test]
    fn triangular_ramp_skews_late() {
        let cfg = BidStreamConfig {
            n_slots: 10,
            arrival_shape: ArrivalShape::TriangularRamp,
            ..Default::default()
        };
        let bids = generate_bid_stream(&cfg).unwrap();
        let mean = bids.iter().map(|b| b.received_at_ms as f64).sum::<f64>() / bids.len() as f64;
        // Ramp mean is lo + 2/3 (hi - lo) = -667 ms.
        assert!((mean + 666.7).abs() < 30.0, "{mean}");
        assert!(bids.iter().all(|b| (-4_000..=1_000).contains(&b.received_at_ms)));
    }

    #[test]
    fn rejects_bad_configs() {
        for cfg in [
            BidStreamConfig {
                bids_per_slot: 0,
                ..Default::default()
            },
            BidStreamConfig {
                arrival_window_ms: (5, 5),
                ..Default::default()
            },
            BidStreamConfig {
                noise_sd_eth: -1.0,
                ..Default::default()
            },
        ] {
            assert!(generate_bid_stream(&cfg).is_err());
        }
    }
}
