//! Probabilistic state estimation for water distribution networks.
//!
//! The crate linearizes the steady-state hydraulic equations around a solved
//! operating point and propagates demand, roughness and sensor-noise
//! uncertainty to the full covariance of every head and flow. A Monte-Carlo
//! driver over the nonlinear model checks the analytic results.

pub mod bundled;
pub mod error;
pub mod generate;
pub mod hydraulics;
pub mod inp;
pub mod lab;
pub mod linearization;
pub mod network;
pub mod pse;
pub mod report;
pub mod scenario;
pub mod sparse;

pub use error::{Error, ErrorCategory, Result};
