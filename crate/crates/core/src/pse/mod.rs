//! Linear covariance propagation from source uncertainty to the network state.

mod algorithm;
mod solve;

pub use algorithm::{nominal_step, run_algorithm1, CoupledResult, PseOptions, PseRun};
pub use solve::{
    assemble_kbb, assemble_kbb_horizon, reconstruction_error, row_weights, solve_covariance,
    solve_weighted, symmetrize_and_clamp,
};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linearization::RankReport;
use crate::network::{StateKind, StateLabel};
use crate::scenario::z_value;

/// Confidence levels reported alongside every state.
pub const CI_LEVELS: [f64; 3] = [0.80, 0.95, 0.99];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Mean and covariance of the state at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceResult {
    pub step: usize,
    pub labels: Vec<StateLabel>,
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    /// `‖A K Aᵀ − K_bb‖_F / ‖K_bb‖_F`; only meaningful for square systems.
    pub reconstruction: Option<f64>,
    pub clamped: usize,
    pub weighted: bool,
    pub rank: RankReport,
}

impl CovarianceResult {
    pub fn variance(&self) -> Vec<f64> {
        self.cov.diagonal().iter().copied().collect()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    pub fn index_of(&self, id: &str, kind: StateKind) -> Option<usize> {
        self.labels.iter().position(|l| l.id == id && l.kind == kind)
    }

    pub fn variance_of(&self, id: &str, kind: StateKind) -> Option<f64> {
        self.index_of(id, kind).map(|i| self.cov[(i, i)])
    }

    pub fn intervals(&self, level: f64) -> Result<Vec<Interval>> {
        confidence_intervals(&self.mean, &self.variance(), level)
    }
}

/// Symmetric Gaussian intervals `mean ± z σ` for the supported levels.
pub fn confidence_intervals(mean: &[f64], variance: &[f64], level: f64) -> Result<Vec<Interval>> {
    if mean.len() != variance.len() {
        return Err(Error::Structure("mean and variance lengths differ".into()));
    }
    let z = z_value(level)?;
    Ok(mean
        .iter()
        .zip(variance)
        .map(|(m, v)| {
            let s = v.max(0.0).sqrt();
            Interval {
                lo: m - z * s,
                hi: m + z * s,
            }
        })
        .collect())
}
