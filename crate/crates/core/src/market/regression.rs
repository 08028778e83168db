use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bids::BidRecord;
use crate::error::{Error, Result};

/// Marginal value of time estimate: slope of bid value (ETH) on receive time (s).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub slope_eth_per_s: f64,
    /// Homoskedastic OLS standard error of the slope.
    pub std_error: f64,
    pub n_obs: u64,
    pub n_slots: u64,
    /// R² of the demeaned regression (plain R² for pooled OLS).
    pub within_r2: f64,
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Default)]
struct Sum {
    sum: f64,
    carry: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let mut s = Sum::default();
    let mut n = 0usize;
    for x in xs {
        s.add(x);
        n += 1;
    }
    s.value() / n as f64
}

/// `(time in seconds, value)` observations grouped by slot.
fn by_slot(bids: &[BidRecord]) -> BTreeMap<u64, Vec<(f64, f64)>> {
    let mut groups: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for b in bids {
        groups
            .entry(b.slot)
            .or_default()
            .push((b.received_at_ms as f64 / 1000.0, b.value_eth));
    }
    groups
}

/// OLS of `y` on `x` over already-centered observations, with `absorbed` extra
/// degrees of freedom used up by the centering.
fn centered_ols(obs: &[(f64, f64)], n_slots: u64, absorbed: u64) -> Result<RegressionReport> {
    let (mut sxx, mut sxy, mut syy) = (Sum::default(), Sum::default(), Sum::default());
    for &(x, y) in obs {
        sxx.add(x * x);
        sxy.add(x * y);
        syy.add(y * y);
    }
    let (sxx, sxy, syy) = (sxx.value(), sxy.value(), syy.value());
    if sxx <= 0.0 {
        return Err(Error::DegenerateDesign(
            "receive times do not vary within any slot".into(),
        ));
    }
    let slope = sxy / sxx;
    let mut rss = Sum::default();
    for &(x, y) in obs {
        rss.add((y - slope * x).powi(2));
    }
    let rss = rss.value();
    let n_obs = obs.len() as u64;
    let dof = n_obs.saturating_sub(absorbed + 1);
    let std_error = if dof > 0 {
        (rss / dof as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(RegressionReport {
        slope_eth_per_s: slope,
        std_error,
        n_obs,
        n_slots,
        within_r2: if syy > 0.0 { 1.0 - rss / syy } else { 1.0 },
    })
}

/// Fixed-effects (within) estimator: demean value and receive time within each slot, then
/// regress demeaned value on demeaned time.
pub fn estimate_mvot(bids: &[BidRecord]) -> Result<RegressionReport> {
    let groups = by_slot(bids);
    if groups.len() < 2 {
        return Err(Error::DegenerateDesign(format!(
            "need bids from at least 2 slots, got {}",
            groups.len()
        )));
    }
    let mut centered = Vec::with_capacity(bids.len());
    for obs in groups.values() {
        let mx = mean(obs.iter().map(|o| o.0));
        let my = mean(obs.iter().map(|o| o.1));
        centered.extend(obs.iter().map(|&(x, y)| (x - mx, y - my)));
    }
    centered_ols(&centered, groups.len() as u64, groups.len() as u64)
}

/// Pooled OLS with a single intercept, ignoring slot effects.
pub fn estimate_pooled_ols(bids: &[BidRecord]) -> Result<RegressionReport> {
    let groups = by_slot(bids);
    if bids.len() < 3 {
        return Err(Error::DegenerateDesign("need at least 3 bids".into()));
    }
    let all: Vec<(f64, f64)> = groups.values().flatten().copied().collect();
    let mx = mean(all.iter().map(|o| o.0));
    let my = mean(all.iter().map(|o| o.1));
    let centered: Vec<(f64, f64)> = all.iter().map(|&(x, y)| (x - mx, y - my)).collect();
    centered_ols(&centered, groups.len() as u64, 1)
}

/// Distribution of slot-effect-residualized values within one receive-time bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualBin {
    pub bin_start_ms: i64,
    pub count: u64,
    pub median_eth: f64,
    pub q25_eth: f64,
    pub q75_eth: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bid values minus their slot's estimated fixed effect, summarized per `bin_ms` bin of
/// receive time. The medians trace the fitted line `slope * t`.
pub fn residualized_bins(bids: &[BidRecord], bin_ms: i64) -> Result<Vec<ResidualBin>> {
    if bin_ms <= 0 {
        return Err(Error::config("bin width must be positive"));
    }
    let report = estimate_mvot(bids)?;
    let mut effects = BTreeMap::new();
    for (slot, obs) in by_slot(bids) {
        let mx = mean(obs.iter().map(|o| o.0));
        let my = mean(obs.iter().map(|o| o.1));
        effects.insert(slot, my - report.slope_eth_per_s * mx);
    }
    let mut bins: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for b in bids {
        bins.entry(b.received_at_ms.div_euclid(bin_ms) * bin_ms)
            .or_default()
            .push(b.value_eth - effects[&b.slot]);
    }
    Ok(bins
        .into_iter()
        .map(|(bin_start_ms, mut values)| {
            values.sort_by(f64::total_cmp);
            ResidualBin {
                bin_start_ms,
                count: values.len() as u64,
                median_eth: quantile(&values, 0.5),
                q25_eth: quantile(&values, 0.25),
                q75_eth: quantile(&values, 0.75),
            }
        })
        .collect())
}
