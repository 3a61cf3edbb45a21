use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scenario::{Family, Scenario};

/// Generator for one `(seed, sample, stream)` triple. Every source owns a
/// stream, so sample `i` is reproducible from the seed and `i` alone.
pub fn sample_rng(seed: u64, sample: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&sample.to_le_bytes());
    key[16..24].copy_from_slice(b"wdn-pse\0");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// A zero-mean, unit-variance draw from `family`.
pub fn standard_draw<R: Rng>(family: Family, rng: &mut R) -> f64 {
    match family {
        Family::Normal => rng.sample(StandardNormal),
        // half-width sqrt(3) gives unit variance
        Family::Uniform => (2.0 * rng.gen::<f64>() - 1.0) * 3f64.sqrt(),
        Family::Laplace => {
            let u: f64 = rng.gen::<f64>() - 0.5;
            let b = std::f64::consts::FRAC_1_SQRT_2;
            -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
        }
    }
}

/// One draw with the given mean and variance.
pub fn draw<R: Rng>(family: Family, mean: f64, variance: f64, rng: &mut R) -> f64 {
    if variance == 0.0 {
        return mean;
    }
    mean + variance.sqrt() * standard_draw(family, rng)
}

/// Source realizations for one sample at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub demands: Vec<f64>,
    pub roughness: Vec<f64>,
    /// Additive noise per scenario measurement.
    pub noise: Vec<f64>,
}

/// Stream ids: demands, then roughness, then measurements.
pub fn realization(scenario: &Scenario, step: usize, seed: u64, sample: u64) -> Realization {
    let d_mean = scenario.demand_means.at(step);
    let d_var = &scenario.demand_var[step];
    let n_j = d_mean.len() as u64;
    let n_p = scenario.roughness_means.len() as u64;
    let demands = d_mean
        .iter()
        .zip(d_var)
        .enumerate()
        .map(|(j, (m, v))| {
            draw(scenario.demand_family, *m, *v, &mut sample_rng(seed, sample, j as u64))
        })
        .collect();
    let roughness = scenario
        .roughness_means
        .iter()
        .zip(&scenario.roughness_var)
        .enumerate()
        .map(|(p, (m, v))| {
            let mut rng = sample_rng(seed, sample, n_j + p as u64);
            draw(scenario.roughness_family, *m, *v, &mut rng)
        })
        .collect();
    let noise = scenario
        .measurements
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let mut rng = sample_rng(seed, sample, n_j + n_p + i as u64);
            draw(m.family, 0.0, m.variance, &mut rng)
        })
        .collect();
    Realization {
        demands,
        roughness,
        noise,
    }
}

/// `n` realizations starting at sample 0.
pub fn sample_sources(scenario: &Scenario, step: usize, n: usize, seed: u64) -> Vec<Realization> {
    (0..n as u64)
        .map(|i| realization(scenario, step, seed, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(family: Family, mean: f64, var: f64, n: u64) -> (f64, f64, f64, f64) {
        let xs: Vec<f64> = (0..n)
            .map(|i| draw(family, mean, var, &mut sample_rng(7, i, 0)))
            .collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (m, v, lo, hi)
    }

    #[test]
    fn zero_variance_returns_mean() {
        for f in [Family::Normal, Family::Uniform, Family::Laplace] {
            let (m, v, _, _) = moments(f, 42.0, 0.0, 100);
            assert_eq!(m, 42.0);
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn normal_moments() {
        let (m, v, _, _) = moments(Family::Normal, 100.0, 60.28, 100_000);
        assert!((m - 100.0).abs() < 0.1);
        assert!((v / 60.28 - 1.0).abs() < 0.03);
    }

    #[test]
    fn uniform_moments_and_support() {
        let (m, v, lo, hi) = moments(Family::Uniform, 100.0, 60.28, 100_000);
        let hw = 60.28f64.sqrt() * 3f64.sqrt();
        assert!(lo >= 100.0 - hw && hi <= 100.0 + hw);
        assert!((m - 100.0).abs() < 0.1);
        assert!((v / 60.28 - 1.0).abs() < 0.03);
    }

    #[test]
    fn laplace_moments() {
        let (m, v, _, _) = moments(Family::Laplace, -3.0, 2.0, 100_000);
        assert!((m + 3.0).abs() < 0.02);
        assert!((v / 2.0 - 1.0).abs() < 0.03);
    }

    #[test]
    fn streams_and_samples_differ() {
        let a: f64 = sample_rng(1, 0, 0).gen();
        let b: f64 = sample_rng(1, 0, 1).gen();
        let c: f64 = sample_rng(1, 1, 0).gen();
        let d: f64 = sample_rng(2, 0, 0).gen();
        assert!(a != b && a != c && a != d);
        let again: f64 = sample_rng(1, 0, 0).gen();
        assert_eq!(a, again);
    }
}
