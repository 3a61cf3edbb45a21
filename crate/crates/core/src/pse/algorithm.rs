use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::solve::{
    assemble_kbb, assemble_kbb_horizon, reconstruction_error, row_weights, solve_covariance,
    solve_weighted,
};
use super::CovarianceResult;
use crate::error::{Error, Result};
use crate::hydraulics::{
    estimate_operating_point, run_eps, EpsOptions, EpsStep, Observation, SolverOptions,
};
use crate::linearization::{
    assemble_step, assemble_system, rank_check, ColLabel, LinearSystem, StepSystem, TankCoupling,
};
use crate::network::{NodeKind, Network, StateRef};
use crate::scenario::{Measurement, RowClass, Scenario};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PseOptions {
    /// Steps to process; the scenario horizon when `None`.
    pub steps: Option<usize>,
    /// Also solve the horizon system with tank rows.
    pub coupled: bool,
    pub tank_coupling: TankCoupling,
    #[serde(skip)]
    pub solver: SolverOptions,
    pub warm_start: bool,
}

impl Default for PseOptions {
    fn default() -> Self {
        Self {
            steps: None,
            coupled: false,
            tank_coupling: TankCoupling::default(),
            solver: SolverOptions::default(),
            warm_start: true,
        }
    }
}

/// Joint covariance of the horizon system.
#[derive(Clone, Debug)]
pub struct CoupledResult {
    pub system: LinearSystem,
    pub cols: Vec<ColLabel>,
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub clamped: usize,
}

impl CoupledResult {
    /// Marginal covariance block of step `k`.
    pub fn block(&self, k: usize) -> DMatrix<f64> {
        let n = self.cols.len() / self.system.steps.len();
        self.cov.view((k * n, k * n), (n, n)).into_owned()
    }
}

#[derive(Clone, Debug)]
pub struct PseRun {
    pub eps: Vec<EpsStep>,
    pub systems: Vec<StepSystem>,
    pub results: Vec<CovarianceResult>,
    pub coupled: Option<CoupledResult>,
}

/// Apply measured fixed-head values to the network so the operating point
/// and the measurement rows agree.
pub(crate) fn with_measured_heads(
    net: &Network,
    measurements: &[Measurement],
) -> (Network, Vec<Measurement>) {
    let mut net = net.clone();
    let mut ms = measurements.to_vec();
    for m in &mut ms {
        if let (StateRef::Head(n), Some(v)) = (m.state, m.value) {
            match n.kind {
                NodeKind::Reservoir => net.reservoirs[n.index].head = v,
                NodeKind::Tank => {
                    let t = &mut net.tanks[n.index];
                    t.initial_level = v - t.elevation;
                }
                NodeKind::Junction => continue,
            }
            m.value = None;
        }
    }
    (net, ms)
}

fn eps_options(scenario: &Scenario, steps: usize, solver: &SolverOptions, warm: bool) -> EpsOptions {
    EpsOptions {
        steps,
        dt: Some(scenario.dt),
        demands: Some(scenario.demand_means.clone()),
        roughness: Some(scenario.roughness_means.clone()),
        valve_schedule: scenario.valve_schedule.clone(),
        solver: solver.clone(),
        warm_start: warm,
    }
}

/// The network with measured fixed heads applied, the scenario's
/// measurements aligned with it, and the nominal EPS step `k`.
pub fn nominal_step(
    net: &Network,
    scenario: &Scenario,
    k: usize,
    solver: &SolverOptions,
) -> Result<(Network, Vec<Measurement>, EpsStep)> {
    if k >= scenario.horizon {
        return Err(Error::Scenario(format!(
            "step {k} is beyond the scenario horizon of {}",
            scenario.horizon
        )));
    }
    let (net, measurements) = with_measured_heads(net, &scenario.measurements);
    let mut eps = run_eps(&net, &eps_options(scenario, k + 1, solver, true))?;
    let step = eps.pop().expect("at least one step");
    Ok((net, measurements, step))
}

/// Per step: operating point, linearization, rank check, `K_bb`, covariance.
pub fn run_algorithm1(net: &Network, scenario: &Scenario, opts: &PseOptions) -> Result<PseRun> {
    let steps = opts.steps.unwrap_or(scenario.horizon);
    if steps == 0 || steps > scenario.horizon {
        return Err(Error::Scenario(format!(
            "requested {steps} steps but the scenario horizon is {}",
            scenario.horizon
        )));
    }
    let (net, measurements) = with_measured_heads(net, &scenario.measurements);
    let net = &net;
    let eps = run_eps(net, &eps_options(scenario, steps, &opts.solver, opts.warm_start))?;
    let labels = net.state_labels();
    let extras: Vec<&Measurement> = measurements.iter().filter(|m| !m.is_fixed_head()).collect();
    let mut systems = Vec::with_capacity(steps);
    let mut results = Vec::with_capacity(steps);
    for (k, e) in eps.iter().enumerate() {
        let cond = &e.conditions;
        let mut sys = assemble_step(net, &measurements, cond, &e.solution.state.x, k)?;
        if !extras.is_empty() {
            let w = row_weights(&sys.rows, &scenario.weights);
            let obs: Vec<Observation> = extras
                .iter()
                .enumerate()
                .map(|(i, m)| Observation {
                    state: m.state,
                    value: sys.b[net.n_x() + i],
                    weight: scenario.weights.get(RowClass::Measurement, &sys.rows[net.n_x() + i].id),
                })
                .collect();
            let est = estimate_operating_point(net, cond, &obs, Some(&w[..net.n_x()]), &opts.solver)
                .map_err(|e| e.at_step(k))?;
            sys = assemble_step(net, &measurements, cond, &est.state.x, k)?;
        }
        let rank = rank_check(&sys.a, &sys.rows, &labels);
        if !rank.is_full_rank() {
            return Err(rank.into_error().at_step(k));
        }
        let kbb = assemble_kbb(&sys, scenario)?;
        let weighted = !scenario.weights.is_identity();
        let (cov, clamped) = if weighted {
            solve_weighted(&sys.a, &kbb, &row_weights(&sys.rows, &scenario.weights))
        } else {
            solve_covariance(&sys.a, &kbb)
        }
        .map_err(|e| e.at_step(k))?;
        let reconstruction = sys
            .is_square()
            .then(|| reconstruction_error(&sys.a, &cov, &kbb));
        results.push(CovarianceResult {
            step: k,
            labels: labels.clone(),
            mean: sys.x0.clone(),
            cov,
            reconstruction,
            clamped,
            weighted,
            rank,
        });
        systems.push(sys);
    }
    let coupled = if opts.coupled {
        Some(solve_coupled(net, scenario, systems.clone(), opts.tank_coupling)?)
    } else {
        None
    };
    Ok(PseRun {
        eps,
        systems,
        results,
        coupled,
    })
}

fn solve_coupled(
    net: &Network,
    scenario: &Scenario,
    systems: Vec<StepSystem>,
    coupling: TankCoupling,
) -> Result<CoupledResult> {
    let sys = assemble_system(net, systems, scenario.dt, coupling)?;
    let rank = rank_check(&sys.a, &sys.rows, &sys.cols);
    if !rank.is_full_rank() {
        return Err(rank.into_error());
    }
    let kbb = assemble_kbb_horizon(&sys, scenario)?;
    let w = row_weights(&sys.rows, &scenario.weights);
    let (cov, clamped) = if sys.a.nrows == sys.a.ncols && w.iter().all(|v| *v == 1.0) {
        solve_covariance(&sys.a, &kbb)?
    } else {
        solve_weighted(&sys.a, &kbb, &w)?
    };
    let mean = sys.steps.iter().flat_map(|s| s.x0.iter().copied()).collect();
    Ok(CoupledResult {
        cols: sys.cols.clone(),
        system: sys,
        mean,
        cov,
        clamped,
    })
}
