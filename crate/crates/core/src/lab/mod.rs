//! Monte-Carlo oracle over the nonlinear model, samplers, error metrics,
//! normality tests, closed-form densities and source-impact sweeps.

mod ks;
mod mcs;
mod metrics;
mod pdf;
mod sampling;
mod sweep;

pub use ks::{ks_normality_test, ks_statistic, KsResult};
pub use mcs::{run_mcs, sample_linearized, McsOptions, SampleBatch, MAX_FAILURE_FRACTION};
pub use metrics::{compare, empirical_covariance, MetricReport, MetricRow};
pub use pdf::{pipe_headloss_pdf, pump_headgain_pdf, simpson, FlowPdf, Histogram};
pub use sampling::{draw, realization, sample_rng, sample_sources, standard_draw, Realization};
pub use sweep::{
    source_impact_sweep, with_margins, SweepGrid, SweepMode, SweepPoint, SweepSource, SweepTable,
};

/// Size the global worker pool; only the first call has an effect.
pub fn configure_threads(n: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .is_ok()
}

pub fn current_threads() -> usize {
    rayon::current_num_threads()
}
