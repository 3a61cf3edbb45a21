//! Text outputs: CSV tables, covariance triplets, JSON summaries and SVG charts.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::lab::{Histogram, MetricReport, SampleBatch, SweepTable};
use crate::network::StateLabel;
use crate::pse::{CovarianceResult, CI_LEVELS};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// One row per state and step with mean, variance and 80/95% intervals.
pub fn variance_csv(results: &[CovarianceResult]) -> Result<String> {
    let mut out =
        String::from("state_id,kind,mean,variance,sigma,ci80_lo,ci80_hi,ci95_lo,ci95_hi,step\n");
    for r in results {
        let v = r.variance();
        let s = r.sigma();
        let c80 = r.intervals(0.80)?;
        let c95 = r.intervals(0.95)?;
        for (i, l) in r.labels.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                l.id,
                l.kind.as_str(),
                r.mean[i],
                v[i],
                s[i],
                c80[i].lo,
                c80[i].hi,
                c95[i].lo,
                c95[i].hi,
                r.step
            );
        }
    }
    Ok(out)
}

/// Nonzero entries of the upper triangle of `cov`.
pub fn triplets(labels: &[StateLabel], cov: &DMatrix<f64>, step: usize) -> String {
    let mut out = String::from("step,row,col,row_state,col_state,value\n");
    for i in 0..cov.nrows() {
        for j in i..cov.ncols() {
            let v = cov[(i, j)];
            if v != 0.0 {
                let _ = writeln!(out, "{step},{i},{j},{},{},{v}", labels[i], labels[j]);
            }
        }
    }
    out
}

/// Per-step JSON summary of a PSE run.
pub fn pse_summary(results: &[CovarianceResult]) -> Result<Value> {
    let mut steps = Vec::with_capacity(results.len());
    for r in results {
        let sigma = r.sigma();
        let variance = r.variance();
        let cis = CI_LEVELS
            .iter()
            .map(|l| r.intervals(*l))
            .collect::<Result<Vec<_>>>()?;
        let states: Vec<Value> = r
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                json!({
                    "state": l.id,
                    "kind": l.kind.as_str(),
                    "mean": r.mean[i],
                    "variance": variance[i],
                    "sigma": sigma[i],
                    "ci80": [cis[0][i].lo, cis[0][i].hi],
                    "ci95": [cis[1][i].lo, cis[1][i].hi],
                    "ci99": [cis[2][i].lo, cis[2][i].hi],
                })
            })
            .collect();
        let n = sigma.len().max(1) as f64;
        steps.push(json!({
            "step": r.step,
            "reconstruction_error": r.reconstruction,
            "clamped_variances": r.clamped,
            "weighted": r.weighted,
            "rank": r.rank,
            "mean_sigma": sigma.iter().sum::<f64>() / n,
            "max_sigma": sigma.iter().copied().fold(0.0, f64::max),
            "states": states,
        }));
    }
    Ok(json!({ "steps": steps }))
}

pub fn batch_manifest(batch: &SampleBatch, scenario_hash: &str) -> Value {
    json!({
        "seed": batch.seed,
        "n": batch.requested,
        "converged": batch.converged(),
        "step": batch.step,
        "scenario_hash": scenario_hash,
        "excluded": batch.excluded,
    })
}

pub fn mcs_sigma_csv(batch: &SampleBatch) -> Result<String> {
    let k = batch.covariance()?;
    let n = batch.converged() as f64;
    let mut out = String::from("state_id,kind,mean,variance,sigma\n");
    for (i, l) in batch.labels.iter().enumerate() {
        let mean = batch.states.iter().map(|(_, x)| x[i]).sum::<f64>() / n;
        let v = k[(i, i)];
        let _ = writeln!(out, "{},{},{mean},{v},{}", l.id, l.kind.as_str(), v.max(0.0).sqrt());
    }
    Ok(out)
}

pub fn metrics_csv(report: &MetricReport) -> String {
    let mut out = String::from("state_id,kind,sigma_mcs,sigma_pse,ae,re_percent\n");
    for r in &report.rows {
        let re = r.re.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{re}",
            r.state, r.kind, r.sigma_mcs, r.sigma_pse, r.ae
        );
    }
    out
}

pub fn sweep_csv(table: &SweepTable) -> String {
    let mut out = String::from("source,me_percent,state_id,kind,sigma,step\n");
    for p in &table.points {
        for (l, s) in table.labels.iter().zip(&p.sigma) {
            let _ = writeln!(
                out,
                "{},{},{},{},{s},{}",
                p.source.as_str(),
                p.me_percent,
                l.id,
                l.kind.as_str(),
                table.step
            );
        }
    }
    out
}

pub fn histogram_csv(h: &Histogram, pdf: impl Fn(f64) -> f64) -> String {
    let mut out = String::from("bin_lo,bin_hi,center,empirical,analytic\n");
    for (i, d) in h.density.iter().enumerate() {
        let lo = h.lo + i as f64 * h.width;
        let c = h.center(i);
        let _ = writeln!(out, "{lo},{},{c},{d},{}", lo + h.width, pdf(c));
    }
    out
}

/// A mean line with 80% and 95% bands over steps.
#[derive(Clone, Debug, PartialEq)]
pub struct BandSeries {
    pub title: String,
    pub mean: Vec<f64>,
    pub ci80: Vec<(f64, f64)>,
    pub ci95: Vec<(f64, f64)>,
}

impl BandSeries {
    pub fn from_results(results: &[CovarianceResult], state: usize) -> Result<Self> {
        let title = results
            .first()
            .map_or_else(String::new, |r| r.labels[state].to_string());
        let mut s = Self {
            title,
            mean: Vec::new(),
            ci80: Vec::new(),
            ci95: Vec::new(),
        };
        for r in results {
            let a = r.intervals(0.80)?[state];
            let b = r.intervals(0.95)?[state];
            s.mean.push(r.mean[state]);
            s.ci80.push((a.lo, a.hi));
            s.ci95.push((b.lo, b.hi));
        }
        Ok(s)
    }
}

/// Standalone SVG of a band chart.
pub fn band_svg(s: &BandSeries) -> String {
    let (w, h, pad) = (640.0, 320.0, 40.0);
    let n = s.mean.len().max(1);
    let lo = s.ci95.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = s.ci95.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        let m = s.mean.first().copied().unwrap_or(0.0);
        (m - 1.0, m + 1.0)
    };
    let x = |i: usize| pad + (w - 2.0 * pad) * i as f64 / (n.max(2) - 1) as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / (hi - lo);
    let band = |pts: &[(f64, f64)]| {
        let mut d = String::new();
        for (i, p) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, x(i), y(p.1));
        }
        for (i, p) in pts.iter().enumerate().rev() {
            let _ = write!(d, "L{:.2},{:.2} ", x(i), y(p.0));
        }
        d.push('Z');
        d
    };
    let mut line = String::new();
    for (i, m) in s.mean.iter().enumerate() {
        let _ = write!(line, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, x(i), y(*m));
    }
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
            "<text x=\"{pad}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
            "<path d=\"{b95}\" fill=\"#9ecae1\" stroke=\"none\"/>\n",
            "<path d=\"{b80}\" fill=\"#e6550d\" fill-opacity=\"0.5\" stroke=\"none\"/>\n",
            "<path d=\"{line}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n",
            "<text x=\"4\" y=\"{ylo:.2}\" font-family=\"sans-serif\" font-size=\"10\">{lo:.2}</text>\n",
            "<text x=\"4\" y=\"{yhi:.2}\" font-family=\"sans-serif\" font-size=\"10\">{hi:.2}</text>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        pad = pad,
        title = s.title,
        b95 = band(&s.ci95),
        b80 = band(&s.ci80),
        line = line.trim_end(),
        ylo = y(lo),
        yhi = y(hi) + 10.0,
        lo = lo,
        hi = hi,
    )
}
