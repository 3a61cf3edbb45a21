use serde::{Deserialize, Serialize};

use super::{
    solve_operating_point_from, tank_update, DemandSchedule, Solution, SolverOptions,
    SolverWorkspace, StepConditions, ValveControl,
};
use crate::error::{Error, Result};
use crate::network::{LinkRef, Network, NodeKind, ValveStatus};

/// One row of a valve-status schedule file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValveScheduleEntry {
    pub step: usize,
    pub valve_id: String,
    pub status: ValveStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<f64>,
}

/// Per-step valve statuses. Steps without an entry keep the valve's
/// status and setting from the network file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValveSchedule {
    pub entries: Vec<ValveScheduleEntry>,
}

impl ValveSchedule {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Scenario(format!("valve schedule: {e}")))
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if !net.valves.iter().any(|v| v.id == e.valve_id) {
                return Err(Error::Scenario(format!(
                    "valve schedule names unknown valve '{}'",
                    e.valve_id
                )));
            }
            if !seen.insert((e.step, e.valve_id.as_str())) {
                return Err(Error::Scenario(format!(
                    "valve '{}' scheduled twice at step {}",
                    e.valve_id, e.step
                )));
            }
            if e.setting.is_some_and(|s| !s.is_finite()) {
                return Err(Error::Scenario(format!(
                    "non-finite setting for valve '{}'",
                    e.valve_id
                )));
            }
        }
        Ok(())
    }

    pub fn controls_at(&self, net: &Network, k: usize) -> Vec<ValveControl> {
        net.valves
            .iter()
            .map(|v| {
                let mut c = ValveControl {
                    status: v.status,
                    setting: v.setting,
                };
                if let Some(e) = self
                    .entries
                    .iter()
                    .find(|e| e.step == k && e.valve_id == v.id)
                {
                    c.status = e.status;
                    if let Some(s) = e.setting {
                        c.setting = s;
                    }
                }
                c
            })
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct EpsOptions {
    pub steps: usize,
    /// Step length in seconds; the network's hydraulic step when `None`.
    pub dt: Option<f64>,
    pub demands: Option<DemandSchedule>,
    pub roughness: Option<Vec<f64>>,
    pub valve_schedule: Option<ValveSchedule>,
    pub solver: SolverOptions,
    /// Seed each step's Newton iteration with the previous solution.
    pub warm_start: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TankEvent {
    pub tank: String,
    pub step: usize,
    pub unclamped: f64,
    pub clamped: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpsStep {
    pub step: usize,
    pub conditions: StepConditions,
    pub solution: Solution,
    /// Tank clamping that happened while advancing to the next step.
    pub tank_events: Vec<TankEvent>,
}

/// Net inflow (GPM) into every tank at state `x`.
pub fn tank_net_inflows(net: &Network, x: &[f64]) -> Vec<(f64, f64)> {
    let mut io = vec![(0.0, 0.0); net.n_t()];
    for l in net.links() {
        let q = x[net.flow_index(l)];
        let (a, b) = net.endpoints(l);
        if b.kind == NodeKind::Tank {
            accumulate(&mut io[b.index], q);
        }
        if a.kind == NodeKind::Tank {
            accumulate(&mut io[a.index], -q);
        }
    }
    io
}

fn accumulate(slot: &mut (f64, f64), q: f64) {
    if q >= 0.0 {
        slot.0 += q;
    } else {
        slot.1 -= q;
    }
}

/// Step the network through `opts.steps` steady states, chaining tank heads.
pub fn run_eps(net: &Network, opts: &EpsOptions) -> Result<Vec<EpsStep>> {
    if opts.steps == 0 {
        return Err(Error::Scenario("horizon must be at least one step".into()));
    }
    let dt = opts.dt.unwrap_or(net.times.hydraulic_step);
    if !(dt > 0.0) {
        return Err(Error::Scenario("time step must be positive".into()));
    }
    if let Some(s) = &opts.valve_schedule {
        s.validate(net)?;
    }
    if let Some(d) = &opts.demands {
        if d.means.len() != net.n_j() || d.steps() < opts.steps {
            return Err(Error::Scenario(format!(
                "demand schedule must cover {} junctions and {} steps",
                net.n_j(),
                opts.steps
            )));
        }
    }
    let mut tanks: Vec<f64> = net.tanks.iter().map(|t| t.initial_head()).collect();
    let mut ws = SolverWorkspace::default();
    let mut out: Vec<EpsStep> = Vec::with_capacity(opts.steps);
    for k in 0..opts.steps {
        let mut cond = StepConditions::at_step(net, k, &tanks);
        if let Some(d) = &opts.demands {
            cond.demands = d.at(k);
        }
        if let Some(r) = &opts.roughness {
            cond.roughness = r.clone();
        }
        if let Some(s) = &opts.valve_schedule {
            cond.valves = s.controls_at(net, k);
        }
        let start = if opts.warm_start {
            out.last().map(|s| s.solution.state.x.as_slice())
        } else {
            None
        };
        let mut solution = solve_operating_point_from(net, &cond, &opts.solver, start, &mut ws)
            .map_err(|e| e.at_step(k))?;
        solution.state.step = k;

        let mut events = Vec::new();
        for (t, (inflow, outflow)) in tank_net_inflows(net, &solution.state.x).into_iter().enumerate() {
            let tank = &net.tanks[t];
            let u = tank_update(tank, tanks[t], inflow, outflow, dt);
            if let Some(raw) = u.clamped_from {
                events.push(TankEvent {
                    tank: tank.id.clone(),
                    step: k,
                    unclamped: raw,
                    clamped: u.head,
                });
            }
            tanks[t] = u.head;
        }
        out.push(EpsStep {
            step: k,
            conditions: cond,
            solution,
            tank_events: events,
        });
    }
    Ok(out)
}

/// Flow through link `l` at every step.
pub fn flow_series(net: &Network, steps: &[EpsStep], l: LinkRef) -> Vec<f64> {
    steps
        .iter()
        .map(|s| s.solution.state.x[net.flow_index(l)])
        .collect()
}
