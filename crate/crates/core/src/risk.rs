//! Empirical Value-at-Risk and Conditional Value-at-Risk.
//!
//! Both measures are reported as return levels (negative numbers for a loss
//! tail), not as positive loss magnitudes. With confidence `alpha` the tail
//! probability is `1 - alpha`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::ReturnPanel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssetRisk {
    pub var: f64,
    pub cvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub alpha: f64,
    pub tickers: Vec<String>,
    pub measures: Vec<AssetRisk>,
}

fn validate(returns: &[f64], alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if returns.is_empty() {
        return Err(Error::EmptySample);
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Zero-based order-statistic index of the `(1 - alpha)` quantile in a
/// sample of size `n`: `floor((1 - alpha) * n)` clamped to `[0, n - 1]`.
pub fn quantile_index(n: usize, alpha: f64) -> usize {
    (((1.0 - alpha) * n as f64).floor() as usize).min(n - 1)
}

/// Lower empirical quantile without interpolation.
pub fn empirical_var(returns: &[f64], alpha: f64) -> Result<f64> {
    validate(returns, alpha)?;
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[quantile_index(sorted.len(), alpha)])
}

/// Mean of every observation at or below the VaR level. The VaR observation
/// itself is always in the tail, so the tail is never empty.
pub fn empirical_cvar(returns: &[f64], alpha: f64) -> Result<f64> {
    let var = empirical_var(returns, alpha)?;
    Ok(tail_mean(returns, var))
}

/// Scans `returns` in input order. The mean is clamped into
/// `[min(tail), var]` to absorb summation roundoff.
fn tail_mean(returns: &[f64], var: f64) -> f64 {
    let (sum, count, lo) = returns
        .iter()
        .filter(|&&r| r <= var)
        .fold((0.0, 0usize, f64::INFINITY), |(s, c, lo), &r| (s + r, c + 1, lo.min(r)));
    (sum / count as f64).clamp(lo, var)
}

pub fn risk_report(returns: &ReturnPanel, alpha: f64) -> Result<RiskReport> {
    let measures = (0..returns.n_assets())
        .map(|i| {
            let xs = returns.series(i);
            let var = empirical_var(&xs, alpha)?;
            Ok(AssetRisk {
                var,
                cvar: tail_mean(&xs, var),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RiskReport {
        alpha,
        tickers: returns.assets().iter().map(|a| a.ticker.clone()).collect(),
        measures,
    })
}
