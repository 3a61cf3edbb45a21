use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::StateLabel;

/// Block size below which sums are accumulated directly.
const PAIRWISE_BLOCK: usize = 32;

fn pairwise_sum(xs: &[Vec<f64>], n: usize) -> DVector<f64> {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut s = DVector::zeros(n);
        for x in xs {
            for (a, b) in s.iter_mut().zip(x) {
                *a += b;
            }
        }
        return s;
    }
    let (l, r) = xs.split_at(xs.len() / 2);
    let (a, b) = rayon::join(|| pairwise_sum(l, n), || pairwise_sum(r, n));
    a + b
}

fn pairwise_outer(xs: &[Vec<f64>], mean: &DVector<f64>) -> DMatrix<f64> {
    let n = mean.len();
    if xs.len() <= PAIRWISE_BLOCK {
        let mut s = DMatrix::zeros(n, n);
        for x in xs {
            let d = DVector::from_iterator(n, x.iter().zip(mean.iter()).map(|(a, m)| a - m));
            s.ger(1.0, &d, &d, 1.0);
        }
        return s;
    }
    let (l, r) = xs.split_at(xs.len() / 2);
    let (a, b) = rayon::join(|| pairwise_outer(l, mean), || pairwise_outer(r, mean));
    a + b
}

/// Unbiased sample covariance (divisor `N - 1`) with pairwise accumulation,
/// so the result does not depend on thread scheduling.
pub fn empirical_covariance(samples: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if samples.len() < 2 {
        return Err(Error::Scenario(format!(
            "covariance needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples[0].len();
    if samples.iter().any(|x| x.len() != n) {
        return Err(Error::Structure("samples have different lengths".into()));
    }
    let mean = pairwise_sum(samples, n) / samples.len() as f64;
    Ok(pairwise_outer(samples, &mean) / (samples.len() - 1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub state: String,
    pub kind: &'static str,
    pub sigma_mcs: f64,
    pub sigma_pse: f64,
    pub ae: f64,
    /// Percent; `None` where the Monte-Carlo sigma vanishes.
    pub re: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub mean_ae: f64,
    pub max_ae: f64,
    pub mean_re: f64,
    pub max_re: f64,
}

impl MetricReport {
    fn from_rows(rows: Vec<MetricRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let mean_ae = rows.iter().map(|r| r.ae).sum::<f64>() / n;
        let max_ae = rows.iter().map(|r| r.ae).fold(0.0, f64::max);
        let res: Vec<f64> = rows.iter().filter_map(|r| r.re).collect();
        let mean_re = if res.is_empty() {
            0.0
        } else {
            res.iter().sum::<f64>() / res.len() as f64
        };
        let max_re = res.iter().copied().fold(0.0, f64::max);
        Self {
            rows,
            mean_ae,
            max_ae,
            mean_re,
            max_re,
        }
    }

    /// The same report restricted to rows accepted by `keep`.
    pub fn subset(&self, keep: impl Fn(&MetricRow) -> bool) -> Self {
        Self::from_rows(self.rows.iter().filter(|r| keep(r)).cloned().collect())
    }
}

/// `AE = |σ_MCS − σ_PSE|` and `RE = AE / σ_MCS · 100` per state.
///
/// RE is left undefined where `σ_MCS` is below `1e-9` times the largest
/// Monte-Carlo sigma, which is where roundoff dominates.
pub fn compare(labels: &[StateLabel], sigma_pse: &[f64], sigma_mcs: &[f64]) -> Result<MetricReport> {
    if labels.len() != sigma_pse.len() || labels.len() != sigma_mcs.len() {
        return Err(Error::Structure(format!(
            "cannot compare {} labels, {} PSE and {} MCS sigmas",
            labels.len(),
            sigma_pse.len(),
            sigma_mcs.len()
        )));
    }
    let floor = 1e-9 * sigma_mcs.iter().copied().fold(0.0, f64::max);
    let rows = labels
        .iter()
        .zip(sigma_pse.iter().zip(sigma_mcs))
        .map(|(l, (p, m))| {
            let ae = (m - p).abs();
            MetricRow {
                state: l.id.clone(),
                kind: l.kind.as_str(),
                sigma_mcs: *m,
                sigma_pse: *p,
                ae,
                re: (*m > floor && *m > 0.0).then(|| ae / m * 100.0),
            }
        })
        .collect();
    Ok(MetricReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::StateKind;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn label(id: &str) -> StateLabel {
        StateLabel {
            id: id.into(),
            kind: StateKind::Head,
        }
    }

    #[test]
    fn identical_samples_have_zero_covariance() {
        let xs = vec![vec![1.0, 2.0]; 10];
        assert_eq!(empirical_covariance(&xs).unwrap(), DMatrix::zeros(2, 2));
        assert!(empirical_covariance(&xs[..1]).is_err());
    }

    #[test]
    fn linear_model_variance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                let u: f64 = StandardNormal.sample(&mut rng);
                vec![u, 2.0 * u]
            })
            .collect();
        let k = empirical_covariance(&xs).unwrap();
        assert!((k[(1, 1)] / 4.0 - 1.0).abs() < 0.05);
        assert!((k[(0, 1)] / 2.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn matches_two_pass_formula() {
        let xs: Vec<Vec<f64>> = (0..257)
            .map(|i| vec![(i as f64).sin() * 1e3 + 5e6, (i as f64 * 0.37).cos()])
            .collect();
        let k = empirical_covariance(&xs).unwrap();
        let n = xs.len() as f64;
        let m0 = xs.iter().map(|x| x[0]).sum::<f64>() / n;
        let v0 = xs.iter().map(|x| (x[0] - m0).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((k[(0, 0)] / v0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn identical_inputs_have_zero_error() {
        let r = compare(&[label("a"), label("b")], &[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.max_ae, 0.0);
        assert_eq!(r.max_re, 0.0);
    }

    #[test]
    fn table_row_example() {
        let r = compare(&[label("J2")], &[4.183], &[4.276]).unwrap();
        assert!((r.rows[0].ae - 0.093).abs() < 1e-9);
        assert!((r.rows[0].re.unwrap() - 2.175).abs() < 1e-3);
    }

    #[test]
    fn zero_mcs_sigma_has_no_relative_error() {
        let r = compare(&[label("R"), label("J")], &[0.0, 1.0], &[0.0, 1.1]).unwrap();
        assert_eq!(r.rows[0].re, None);
        assert!((r.mean_re - 100.0 / 11.0).abs() < 1e-9);
        assert!(compare(&[label("R")], &[0.0, 1.0], &[0.0]).is_err());
    }
}
