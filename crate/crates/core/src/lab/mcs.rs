use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::metrics::empirical_covariance;
use super::sampling::{realization, sample_rng, standard_draw};
use crate::error::{Error, Result};
use crate::hydraulics::{solve_operating_point_from, SolverOptions, SolverWorkspace};
use crate::linearization::StepSystem;
use crate::network::{NodeKind, StateLabel, StateRef};
use crate::pse::{assemble_kbb, nominal_step};
use crate::scenario::{Family, Scenario};
use crate::sparse::SparseLu;

/// Largest tolerated fraction of samples that fail to converge.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct McsOptions {
    pub samples: usize,
    pub seed: u64,
    pub step: usize,
    pub solver: SolverOptions,
    /// Worker threads; rayon's global pool when `None`.
    pub threads: Option<usize>,
}

impl Default for McsOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 2019,
            step: 0,
            solver: SolverOptions::default(),
            threads: None,
        }
    }
}

/// Solved states of a Monte-Carlo run, in sample order.
#[derive(Clone, Debug, Serialize)]
pub struct SampleBatch {
    pub seed: u64,
    pub requested: usize,
    pub step: usize,
    pub labels: Vec<StateLabel>,
    /// Deterministic operating point at the source means.
    pub nominal: Vec<f64>,
    /// Converged states with their sample index.
    pub states: Vec<(usize, Vec<f64>)>,
    /// Samples whose Newton solve failed.
    pub excluded: Vec<usize>,
}

impl SampleBatch {
    pub fn converged(&self) -> usize {
        self.states.len()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|(_, x)| x[i]).collect()
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let xs: Vec<Vec<f64>> = self.states.iter().map(|(_, x)| x.clone()).collect();
        empirical_covariance(&xs)
    }

    pub fn sigma(&self) -> Result<Vec<f64>> {
        let k = self.covariance()?;
        Ok(k.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect())
    }
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Solve the nonlinear model for `samples` draws of demands, roughness and
/// fixed-head noise at one step.
pub fn run_mcs(net: &crate::network::Network, scenario: &Scenario, opts: &McsOptions) -> Result<SampleBatch> {
    if !scenario.is_sufficient() {
        return Err(Error::Scenario(
            "Monte-Carlo simulation needs a sufficient measurement set; \
             extra measurements make the nonlinear model over-determined"
                .into(),
        ));
    }
    if opts.samples == 0 {
        return Err(Error::Scenario("at least one sample is required".into()));
    }
    let (net, measurements, base) = nominal_step(net, scenario, opts.step, &opts.solver)?;
    let net = &net;
    let nominal = base.solution.state.x.clone();
    let n_fixed = net.n_h() - net.n_j();
    // scenario measurements are fixed heads here; map each to its slot
    let slots: Vec<usize> = measurements
        .iter()
        .map(|m| match m.state {
            StateRef::Head(n) if n.kind != NodeKind::Junction => net.head_index(n) - net.n_j(),
            _ => unreachable!("sufficient scenario"),
        })
        .collect();
    let step = opts.step;
    let solve = |i: usize| -> Option<Vec<f64>> {
        let r = realization(scenario, step, opts.seed, i as u64);
        let mut cond = base.conditions.clone();
        cond.demands = r.demands;
        cond.roughness = r.roughness;
        for (slot, v) in slots.iter().zip(&r.noise) {
            cond.fixed_heads[*slot] += v;
        }
        debug_assert_eq!(cond.fixed_heads.len(), n_fixed);
        if cond.roughness.iter().any(|c| !(*c > 0.0)) {
            return None;
        }
        let mut ws = SolverWorkspace::default();
        solve_operating_point_from(net, &cond, &opts.solver, Some(&nominal), &mut ws)
            .ok()
            .map(|s| s.state.x)
    };
    let results: Vec<Option<Vec<f64>>> =
        in_pool(opts.threads, || (0..opts.samples).into_par_iter().map(solve).collect())?;
    let mut states = Vec::with_capacity(results.len());
    let mut excluded = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Some(x) => states.push((i, x)),
            None => excluded.push(i),
        }
    }
    if excluded.len() as f64 > MAX_FAILURE_FRACTION * opts.samples as f64 {
        return Err(Error::Numeric(format!(
            "{} of {} samples failed to converge (first: {}); the scenario is likely infeasible",
            excluded.len(),
            opts.samples,
            excluded[0]
        )));
    }
    if !excluded.is_empty() {
        log::warn!("{} samples did not converge and were excluded", excluded.len());
    }
    Ok(SampleBatch {
        seed: opts.seed,
        requested: opts.samples,
        step,
        labels: net.state_labels(),
        nominal,
        states,
        excluded,
    })
}

/// Sample the linearized model `A x = b` with each right-hand-side entry
/// perturbed by its own source family and variance.
pub fn sample_linearized(
    sys: &StepSystem,
    scenario: &Scenario,
    samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if !sys.is_square() {
        return Err(Error::Scenario("linearized sampling needs a square system".into()));
    }
    let kbb = assemble_kbb(sys, scenario)?;
    let n_j = scenario.demand_means.means.len();
    let n_p = scenario.roughness_means.len();
    let family = |r: usize| -> Family {
        if r < n_j {
            scenario.demand_family
        } else if r < n_j + n_p {
            scenario.roughness_family
        } else if r >= sys.n_e {
            sys.measurements[r - sys.n_e].family
        } else {
            Family::Normal
        }
    };
    let lu = SparseLu::new(&sys.a)?;
    let sd: Vec<f64> = kbb.iter().map(|v| v.sqrt()).collect();
    Ok((0..samples)
        .into_par_iter()
        .map(|i| {
            let db: Vec<f64> = sd
                .iter()
                .enumerate()
                .map(|(r, s)| {
                    if *s == 0.0 {
                        0.0
                    } else {
                        s * standard_draw(family(r), &mut sample_rng(seed, i as u64, r as u64))
                    }
                })
                .collect();
            let dx = lu.solve(&db);
            sys.x0.iter().zip(dx).map(|(a, d)| a + d).collect()
        })
        .collect())
}
