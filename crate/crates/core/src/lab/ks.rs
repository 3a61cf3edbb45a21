use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Smallest sample accepted by the normality test.
pub const MIN_SAMPLES: usize = 50;

/// Modified-statistic critical values for a normal with estimated mean and
/// variance: reject when `D (sqrt(n) - 0.01 + 0.85 / sqrt(n))` exceeds them.
const CRITICAL: [(f64, f64); 5] = [
    (0.15, 0.775),
    (0.10, 0.819),
    (0.05, 0.895),
    (0.025, 0.955),
    (0.01, 1.035),
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub pass: bool,
    pub n: usize,
}

/// Two-sided one-sample KS distance between the sample and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// KS test against a normal fitted by sample moments, with critical values
/// corrected for the fitted parameters.
pub fn ks_normality_test(samples: &[f64], alpha: f64) -> Result<KsResult> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(Error::Scenario(format!(
            "normality test needs at least {MIN_SAMPLES} samples, got {n}"
        )));
    }
    let crit = CRITICAL
        .iter()
        .find(|(a, _)| (a - alpha).abs() < 1e-12)
        .map(|(_, c)| *c)
        .ok_or_else(|| {
            Error::Scenario(format!(
                "unsupported significance level {alpha}; use 0.15, 0.10, 0.05, 0.025 or 0.01"
            ))
        })?;
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Numeric("normality test on a degenerate sample".into()));
    }
    let dist = Normal::new(mean, var.sqrt()).map_err(|e| Error::Numeric(e.to_string()))?;
    let d = ks_statistic(samples, |x| dist.cdf(x));
    let rn = (n as f64).sqrt();
    let critical = crit / (rn - 0.01 + 0.85 / rn);
    Ok(KsResult {
        statistic: d,
        critical,
        pass: d <= critical,
        n,
    })
}
