//! Densities of pump head gain and pipe head loss when the flow is normal,
//! obtained by the change-of-variables rule on the positive-flow branch.

use serde::Serialize;
use statrs::distribution::{Continuous, Normal};

use crate::network::PumpCurve;

/// Normal flow distribution (GPM).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FlowPdf {
    pub mean: f64,
    pub sd: f64,
}

impl FlowPdf {
    pub fn density(&self, q: f64) -> f64 {
        Normal::new(self.mean, self.sd).map_or(0.0, |n| n.pdf(q))
    }
}

/// Density of the pump head drop `Δh = -(h0 - r q^β)` for `q ≥ 0`.
pub fn pump_headgain_pdf(curve: &PumpCurve, flow: &FlowPdf, dh: f64) -> f64 {
    let (h0, r, beta) = (curve.h0, curve.r, curve.beta);
    let u = (h0 + dh) / r;
    if !(u > 0.0) || !(r > 0.0) || !(beta > 0.0) {
        return 0.0;
    }
    let q = u.powf(1.0 / beta);
    u.powf(1.0 / beta - 1.0) / (r * beta) * flow.density(q)
}

/// Density of the pipe head loss `Δh = R q^α` for `q > 0`.
pub fn pipe_headloss_pdf(r: f64, alpha: f64, flow: &FlowPdf, dh: f64) -> f64 {
    if !(dh > 0.0) || !(r > 0.0) || !(alpha > 0.0) {
        return 0.0;
    }
    let u = dh / r;
    let q = u.powf(1.0 / alpha);
    u.powf(1.0 / alpha - 1.0) / (alpha * r) * flow.density(q)
}

/// Composite Simpson rule with `n` (rounded up to even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Equal-width histogram normalized to a density over `[lo, hi)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub density: Vec<f64>,
    /// Samples outside the range.
    pub outside: usize,
}

impl Histogram {
    pub fn new(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let bins = bins.max(1);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        let mut outside = 0;
        for x in samples {
            let b = ((x - lo) / width).floor();
            if b >= 0.0 && (b as usize) < bins {
                counts[b as usize] += 1;
            } else {
                outside += 1;
            }
        }
        let n = samples.len().max(1) as f64;
        Self {
            lo,
            width,
            density: counts.iter().map(|c| *c as f64 / (n * width)).collect(),
            outside,
        }
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width
    }

    /// Largest gap between a bin's density and the bin average of `pdf`.
    pub fn sup_distance(&self, pdf: impl Fn(f64) -> f64) -> f64 {
        (0..self.density.len())
            .map(|i| {
                let a = self.lo + i as f64 * self.width;
                let avg = simpson(&pdf, a, a + self.width, 16) / self.width;
                (self.density[i] - avg).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::sampling::{draw, sample_rng};
    use crate::scenario::Family;
    use statrs::distribution::ContinuousCDF;

    const CURVE: PumpCurve = PumpCurve {
        h0: 338.3,
        r: 0.0073,
        beta: 2.0,
    };

    fn flows(f: &FlowPdf, n: u64) -> Vec<f64> {
        (0..n)
            .map(|i| draw(Family::Normal, f.mean, f.sd * f.sd, &mut sample_rng(9, i, 0)))
            .collect()
    }

    #[test]
    fn pump_density_integrates_to_one() {
        let f = FlowPdf { mean: 133.0, sd: 8.0 };
        let lo = -CURVE.h0 + CURVE.r * 70f64.powi(2);
        let hi = -CURVE.h0 + CURVE.r * 200f64.powi(2);
        let total = simpson(|d| pump_headgain_pdf(&CURVE, &f, d), lo, hi, 20_000);
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn pipe_density_integrates_to_one() {
        let f = FlowPdf { mean: 100.0, sd: 15.0 };
        let (r, a) = (0.002, 1.852);
        let hi = r * 220f64.powf(a);
        let lo = r * 5f64.powf(a);
        let total = simpson(|d| pipe_headloss_pdf(r, a, &f, d), lo, hi, 40_000);
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn linear_transforms_are_exact() {
        let f = FlowPdf { mean: 10.0, sd: 2.0 };
        let lin = PumpCurve { h0: 50.0, r: 3.0, beta: 1.0 };
        for dh in [-40.0, -20.0, -10.0, 5.0] {
            let q = (50.0 + dh) / 3.0;
            assert!((pump_headgain_pdf(&lin, &f, dh) - f.density(q) / 3.0).abs() < 1e-15);
            assert!((pipe_headloss_pdf(0.5, 1.0, &f, dh.abs()) - 2.0 * f.density(2.0 * dh.abs())).abs() < 1e-15);
        }
        assert_eq!(pipe_headloss_pdf(0.5, 1.852, &f, -1.0), 0.0);
        assert_eq!(pump_headgain_pdf(&CURVE, &f, -400.0), 0.0);
    }

    #[test]
    fn pump_density_matches_sampled_histogram() {
        let f = FlowPdf { mean: 133.0, sd: 8.0 };
        let dh: Vec<f64> = flows(&f, 100_000)
            .iter()
            .map(|q| -(CURVE.h0 - CURVE.r * q * q))
            .collect();
        let h = Histogram::new(&dh, -230.0, -150.0, 40);
        assert!(h.sup_distance(|d| pump_headgain_pdf(&CURVE, &f, d)) < 0.02);
    }

    #[test]
    fn pipe_density_matches_sampled_histogram() {
        let f = FlowPdf { mean: 100.0, sd: 25.0 };
        let (r, a) = (0.002, 1.852);
        let dh: Vec<f64> = flows(&f, 100_000).iter().map(|q| r * q.abs().powf(a) * q.signum()).collect();
        let h = Histogram::new(&dh, 0.0, 60.0, 60);
        let d = h.sup_distance(|x| pipe_headloss_pdf(r, a, &f, x));
        assert!(d < 0.02, "{d}");
        // the density without the 1/alpha factor is visibly wrong
        let wrong = h.sup_distance(|x| a * pipe_headloss_pdf(r, a, &f, x));
        assert!(wrong > 0.02, "{wrong}");
    }

    #[test]
    fn positive_branch_mass() {
        let f = FlowPdf { mean: 20.0, sd: 15.0 };
        let (r, a) = (0.01, 1.852);
        // substitute dh = s^alpha to remove the integrable singularity at zero
        let g = |s: f64| pipe_headloss_pdf(r, a, &f, s.powf(a)) * a * s.powf(a - 1.0);
        let total = simpson(g, 1e-12, (r * 120f64.powf(a)).powf(1.0 / a), 40_000);
        let p = 1.0 - Normal::new(20.0, 15.0).unwrap().cdf(0.0);
        assert!((total - p).abs() < 1e-6, "{total} vs {p}");
    }
}
