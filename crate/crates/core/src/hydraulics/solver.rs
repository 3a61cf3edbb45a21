use nalgebra::{DMatrix, DVector};

use super::{
    headloss, pipe_resistance_gpm, pump_headgain_ext, pump_slope_ext, valve_equations,
    HydraulicState, ValveEquation,
};
use crate::error::{Error, Result};
use crate::network::{
    LinkKind, LinkRef, Network, NodeKind, NodeRef, StateRef, ValveKind, ValveStatus, HW_EXPONENT,
    SLOPE_FLOOR,
};
use crate::sparse::{CooMatrix, LuCache};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValveControl {
    pub status: ValveStatus,
    pub setting: f64,
}

/// Everything the steady-state equations need at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepConditions {
    /// Junction demands (GPM).
    pub demands: Vec<f64>,
    /// Hazen-Williams C per pipe.
    pub roughness: Vec<f64>,
    /// Heads of reservoirs then tanks (ft).
    pub fixed_heads: Vec<f64>,
    pub valves: Vec<ValveControl>,
}

impl StepConditions {
    /// Conditions at step 0 with initial tank heads and default valve statuses.
    pub fn nominal(net: &Network) -> Self {
        let tanks: Vec<f64> = net.tanks.iter().map(|t| t.initial_head()).collect();
        Self::at_step(net, 0, &tanks)
    }

    pub fn at_step(net: &Network, k: usize, tank_heads: &[f64]) -> Self {
        let mut fixed_heads: Vec<f64> = net.reservoirs.iter().map(|r| r.head).collect();
        fixed_heads.extend_from_slice(tank_heads);
        Self {
            demands: net.demands_at(k),
            roughness: net.pipes.iter().map(|p| p.roughness).collect(),
            fixed_heads,
            valves: net
                .valves
                .iter()
                .map(|v| ValveControl {
                    status: v.status,
                    setting: v.setting,
                })
                .collect(),
        }
    }

    fn check(&self, net: &Network) -> Result<()> {
        let dims = [
            (self.demands.len(), net.n_j(), "demands"),
            (self.roughness.len(), net.n_p(), "roughness"),
            (self.fixed_heads.len(), net.n_r() + net.n_t(), "fixed heads"),
            (self.valves.len(), net.n_l(), "valve controls"),
        ];
        for (got, want, what) in dims {
            if got != want {
                return Err(Error::Structure(format!(
                    "{what}: expected {want} entries, got {got}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Convergence threshold on the max-norm of the residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Starting flow for every link without a better guess (GPM).
    pub initial_flow: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 100,
            initial_flow: 1.0,
        }
    }
}

/// Inequality limits found violated at a converged point.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
#[serde(tag = "limit", rename_all = "snake_case")]
pub enum LimitViolation {
    ReversePumpFlow { pump: String, flow: f64 },
    ReversePrvFlow { valve: String, flow: f64 },
}

impl std::fmt::Display for LimitViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LimitViolation::ReversePumpFlow { pump, flow } => {
                write!(f, "pump '{pump}' runs backwards ({flow:.4} GPM)")
            }
            LimitViolation::ReversePrvFlow { valve, flow } => {
                write!(f, "PRV '{valve}' has reverse flow ({flow:.4} GPM)")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub state: HydraulicState,
    pub iterations: usize,
    /// Final residual (max-norm for square solves, weighted 2-norm for estimates).
    pub residual: f64,
    pub violations: Vec<LimitViolation>,
}

/// Reusable factorization state for repeated solves on one network.
#[derive(Default)]
pub struct SolverWorkspace {
    lu: LuCache,
}

/// An extra measurement beyond the sufficient set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub state: StateRef,
    pub value: f64,
    pub weight: f64,
}

/// Residual of the square steady-state system: mass rows, link rows, fixed-head rows.
pub fn evaluate_residual(net: &Network, cond: &StepConditions, x: &[f64]) -> Vec<f64> {
    let mut f = super::mass_balance_residual(net, x, &cond.demands);
    let h = |n: NodeRef| x[net.head_index(n)];
    for (i, p) in net.pipes.iter().enumerate() {
        let r = pipe_resistance_gpm(p, cond.roughness[i]);
        let q = x[net.flow_index(LinkRef::pipe(i))];
        f.push(h(p.from) - h(p.to) - headloss(r, q));
    }
    for (i, m) in net.pumps.iter().enumerate() {
        let q = x[net.flow_index(LinkRef::pump(i))];
        f.push(h(m.from) - h(m.to) - pump_headgain_ext(&m.curve, q));
    }
    for (i, v) in net.valves.iter().enumerate() {
        let c = cond.valves[i];
        let q = x[net.flow_index(LinkRef::valve(i))];
        f.push(match valve_equations(v, c.status, c.setting) {
            ValveEquation::HeadDifference { from, to } => h(from) - h(to),
            ValveEquation::Flow { setting } => q - setting,
            ValveEquation::DownstreamHead { to, setting } => h(to) - setting,
        });
    }
    let nj = net.n_j();
    for (i, &v) in cond.fixed_heads.iter().enumerate() {
        f.push(x[nj + i] - v);
    }
    f
}

/// Jacobian of [`evaluate_residual`] with head-loss slopes floored at [`SLOPE_FLOOR`].
pub fn jacobian(net: &Network, cond: &StepConditions, x: &[f64]) -> CooMatrix {
    let n = net.n_x();
    let nj = net.n_j();
    let mut a = CooMatrix::new(n, n);
    for l in net.links() {
        let (from, to) = net.endpoints(l);
        let col = net.flow_index(l);
        if from.kind == NodeKind::Junction {
            a.push(from.index, col, -1.0);
        }
        if to.kind == NodeKind::Junction {
            a.push(to.index, col, 1.0);
        }
    }
    for l in net.links() {
        let row = nj + net.link_index(l);
        let col = net.flow_index(l);
        let (from, to) = net.endpoints(l);
        let (hf, ht) = (net.head_index(from), net.head_index(to));
        match l.kind {
            LinkKind::Pipe => {
                let r = pipe_resistance_gpm(&net.pipes[l.index], cond.roughness[l.index]);
                let k = (HW_EXPONENT * r * x[col].abs().powf(HW_EXPONENT - 1.0)).max(SLOPE_FLOOR);
                a.push(row, hf, 1.0);
                a.push(row, ht, -1.0);
                a.push(row, col, -k);
            }
            LinkKind::Pump => {
                let k = pump_slope_ext(&net.pumps[l.index].curve, x[col]).max(SLOPE_FLOOR);
                a.push(row, hf, 1.0);
                a.push(row, ht, -1.0);
                a.push(row, col, -k);
            }
            LinkKind::Valve => {
                let v = &net.valves[l.index];
                let c = cond.valves[l.index];
                match valve_equations(v, c.status, c.setting) {
                    ValveEquation::HeadDifference { .. } => {
                        a.push(row, hf, 1.0);
                        a.push(row, ht, -1.0);
                    }
                    ValveEquation::Flow { .. } => a.push(row, col, 1.0),
                    ValveEquation::DownstreamHead { .. } => a.push(row, ht, 1.0),
                }
            }
        }
    }
    for i in 0..net.n_r() + net.n_t() {
        a.push(nj + net.n_q() + i, nj + i, 1.0);
    }
    a
}

fn initial_guess(net: &Network, cond: &StepConditions, opts: &SolverOptions) -> Vec<f64> {
    let mut x = vec![0.0; net.n_x()];
    let nf = cond.fixed_heads.len();
    let avg = if nf > 0 {
        cond.fixed_heads.iter().sum::<f64>() / nf as f64
    } else {
        0.0
    };
    for h in x.iter_mut().take(net.n_j()) {
        *h = avg;
    }
    for (i, &v) in cond.fixed_heads.iter().enumerate() {
        x[net.n_j() + i] = v;
    }
    for l in net.links() {
        x[net.flow_index(l)] = opts.initial_flow;
    }
    for (i, v) in net.valves.iter().enumerate() {
        let c = cond.valves[i];
        if c.status == ValveStatus::Active {
            match v.kind {
                ValveKind::Fcv => x[net.flow_index(LinkRef::valve(i))] = c.setting,
                ValveKind::Prv => {
                    if v.to.kind == NodeKind::Junction {
                        x[v.to.index] = c.setting;
                    }
                }
            }
        }
    }
    x
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, a| m.max(a.abs()))
}

/// Solve the square steady-state system with damped Newton iterations.
pub fn solve_operating_point(
    net: &Network,
    cond: &StepConditions,
    opts: &SolverOptions,
) -> Result<Solution> {
    solve_operating_point_from(net, cond, opts, None, &mut SolverWorkspace::default())
}

/// Like [`solve_operating_point`], optionally warm-started from `start`.
pub fn solve_operating_point_from(
    net: &Network,
    cond: &StepConditions,
    opts: &SolverOptions,
    start: Option<&[f64]>,
    ws: &mut SolverWorkspace,
) -> Result<Solution> {
    cond.check(net)?;
    let mut x = match start {
        Some(s) if s.len() == net.n_x() => s.to_vec(),
        _ => initial_guess(net, cond, opts),
    };
    let mut f = evaluate_residual(net, cond, &x);
    let mut iterations = 0;
    loop {
        let res = norm_inf(&f);
        if !res.is_finite() {
            return Err(Error::NonConvergence {
                step: None,
                iterations,
                residual: res,
                reason: "residual is not finite".into(),
            });
        }
        if res < opts.tolerance {
            break;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence {
                step: None,
                iterations,
                residual: res,
                reason: "iteration limit reached".into(),
            });
        }
        iterations += 1;
        let jac = jacobian(net, cond, &x);
        let lu = ws.lu.factor(&jac).map_err(|e| Error::SingularJacobian {
            step: None,
            detail: e.to_string(),
        })?;
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let dx = lu.solve(&rhs);
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularJacobian {
                step: None,
                detail: "Newton step is not finite".into(),
            });
        }
        let f0 = norm2(&f);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + t * d).collect();
            let ft = evaluate_residual(net, cond, &trial);
            let n = norm2(&ft);
            if n.is_finite() && n <= (1.0 - 1e-4 * t) * f0 {
                x = trial;
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            if norm_inf(&f) < opts.tolerance.sqrt() * 1e-2 {
                // cannot improve further in floating point; accept if close
                break;
            }
            return Err(Error::NonConvergence {
                step: None,
                iterations,
                residual: norm_inf(&f),
                reason: "line search could not reduce the residual".into(),
            });
        }
    }
    let residual = norm_inf(&f);
    Ok(Solution {
        violations: limit_violations(net, &x),
        state: HydraulicState { x, step: 0 },
        iterations,
        residual,
    })
}

/// Weighted least-squares estimate when more measurements than unknowns are
/// available. `base_weights` covers the square rows (default 1).
pub fn estimate_operating_point(
    net: &Network,
    cond: &StepConditions,
    extra: &[Observation],
    base_weights: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<Solution> {
    cond.check(net)?;
    let n = net.n_x();
    let m = n + extra.len();
    let mut w = vec![1.0; m];
    if let Some(bw) = base_weights {
        if bw.len() != n {
            return Err(Error::Structure(format!(
                "expected {n} row weights, got {}",
                bw.len()
            )));
        }
        w[..n].copy_from_slice(bw);
    }
    for (i, o) in extra.iter().enumerate() {
        w[n + i] = o.weight;
    }
    if w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Scenario("row weights must be positive".into()));
    }
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();

    let residual = |x: &[f64]| -> Vec<f64> {
        let mut f = evaluate_residual(net, cond, x);
        for o in extra {
            f.push(x[net.state_index(o.state)] - o.value);
        }
        f.iter().zip(&sw).map(|(a, s)| a * s).collect()
    };

    // start from the square solution, which satisfies every base row
    let mut x = solve_operating_point(net, cond, opts)?.state.x;
    let mut f = residual(&x);
    let mut iterations = 0;
    loop {
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence {
                step: None,
                iterations,
                residual: norm2(&f),
                reason: "iteration limit reached".into(),
            });
        }
        iterations += 1;
        let jac = jacobian(net, cond, &x).to_dense();
        let mut j = DMatrix::zeros(m, n);
        j.view_mut((0, 0), (n, n)).copy_from(&jac);
        for (i, o) in extra.iter().enumerate() {
            j[(n + i, net.state_index(o.state))] = 1.0;
        }
        for r in 0..m {
            for c in 0..n {
                j[(r, c)] *= sw[r];
            }
        }
        let rhs = -DVector::from_column_slice(&f);
        let svd = j.svd(true, true);
        let dx = svd
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::Numeric(format!("least-squares step failed: {e}")))?;
        let f0 = norm2(&f);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + t * d).collect();
            let ft = residual(&trial);
            if norm2(&ft) <= f0 {
                x = trial;
                f = ft;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        let step = t * dx.amax();
        let scale = 1.0 + norm_inf(&x);
        if !moved || step < 1e-10 * scale {
            break;
        }
    }
    Ok(Solution {
        violations: limit_violations(net, &x),
        state: HydraulicState { x, step: 0 },
        iterations,
        residual: norm2(&f),
    })
}

fn limit_violations(net: &Network, x: &[f64]) -> Vec<LimitViolation> {
    let mut out = Vec::new();
    for (i, p) in net.pumps.iter().enumerate() {
        let q = x[net.flow_index(LinkRef::pump(i))];
        if q < 0.0 {
            out.push(LimitViolation::ReversePumpFlow {
                pump: p.id.clone(),
                flow: q,
            });
        }
    }
    for (i, v) in net.valves.iter().enumerate() {
        let q = x[net.flow_index(LinkRef::valve(i))];
        if v.kind == ValveKind::Prv && q < 0.0 {
            out.push(LimitViolation::ReversePrvFlow {
                valve: v.id.clone(),
                flow: q,
            });
        }
    }
    for w in &out {
        log::warn!("{w}");
    }
    out
}
