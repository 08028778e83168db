//! Non-negative delay distributions (signing, relay validation, slot baselines).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{normal_draw, unit_draw};

/// Median `getHeader` to `getPayload` gap used to calibrate the default signing delay, in ms.
pub const SIGNING_MEDIAN_MS: f64 = 418.0;
pub const SIGNING_LOG_SIGMA: f64 = 0.5;

/// A non-negative distribution. Latency uses are in milliseconds; the unit is otherwise
/// the caller's.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LatencyDistribution {
    Degenerate { value: f64 },
    Exponential { mean: f64 },
    /// `exp(ln(median) + sigma * Z)`.
    Lognormal { median: f64, sigma: f64 },
}

impl LatencyDistribution {
    /// Default signing-delay model: lognormal with a 418 ms median.
    pub fn default_signing() -> Self {
        LatencyDistribution::Lognormal {
            median: SIGNING_MEDIAN_MS,
            sigma: SIGNING_LOG_SIGMA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LatencyDistribution::Degenerate { value } => value >= 0.0 && value.is_finite(),
            LatencyDistribution::Exponential { mean } => mean > 0.0 && mean.is_finite(),
            LatencyDistribution::Lognormal { median, sigma } => {
                median > 0.0 && median.is_finite() && sigma >= 0.0 && sigma.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid distribution parameters: {self:?}")))
        }
    }

    pub fn median(&self) -> f64 {
        match *self {
            LatencyDistribution::Degenerate { value } => value,
            LatencyDistribution::Exponential { mean } => mean * std::f64::consts::LN_2,
            LatencyDistribution::Lognormal { median, .. } => median,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LatencyDistribution::Degenerate { value } => value,
            LatencyDistribution::Exponential { mean } => mean,
            LatencyDistribution::Lognormal { median, sigma } => median * (sigma * sigma / 2.0).exp(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LatencyDistribution::Degenerate { value } => value,
            LatencyDistribution::Exponential { mean } => -mean * (-unit_draw(rng)).ln_1p(),
            LatencyDistribution::Lognormal { median, sigma } => {
                (median.ln() + sigma * normal_draw(rng)).exp()
            }
        }
    }

    /// Sample rounded half-up to whole units.
    pub fn sample_rounded<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        (self.sample(rng) + 0.5).floor() as i64
    }
}
