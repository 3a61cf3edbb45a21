//! Nonlinear component models, the operating-point solver and extended-period stepping.

mod eps;
mod solver;

pub use eps::{
    flow_series, run_eps, tank_net_inflows, EpsOptions, EpsStep, TankEvent, ValveSchedule,
    ValveScheduleEntry,
};
pub use solver::{
    estimate_operating_point, evaluate_residual, jacobian, solve_operating_point,
    solve_operating_point_from, LimitViolation, Observation, Solution, SolverOptions,
    SolverWorkspace, StepConditions, ValveControl,
};

use crate::error::{Error, Result};
use crate::network::{
    Network, NodeRef, Pipe, PumpCurve, Tank, Valve, ValveKind, ValveStatus, GPM_PER_CFS,
    HW_EXPONENT,
};

/// Solved heads and flows at one step, ordered as [`Network::state_labels`].
#[derive(Clone, Debug, PartialEq)]
pub struct HydraulicState {
    pub x: Vec<f64>,
    pub step: usize,
}

/// Demand means, one row per junction and one column per step (GPM).
#[derive(Clone, Debug, PartialEq)]
pub struct DemandSchedule {
    pub means: Vec<Vec<f64>>,
}

impl DemandSchedule {
    /// Base demands scaled by their patterns for steps `0..steps`.
    pub fn from_patterns(net: &Network, steps: usize) -> Self {
        let per_step: Vec<Vec<f64>> = (0..steps).map(|k| net.demands_at(k)).collect();
        let means = (0..net.n_j())
            .map(|j| per_step.iter().map(|d| d[j]).collect())
            .collect();
        Self { means }
    }

    pub fn steps(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn at(&self, k: usize) -> Vec<f64> {
        self.means.iter().map(|row| row[k]).collect()
    }
}

/// Hazen-Williams resistance `4.727 L C^-1.852 D^-4.871` (ft, cfs).
pub fn hw_resistance(length_ft: f64, roughness: f64, diameter_ft: f64) -> f64 {
    4.727 * length_ft * roughness.powf(-HW_EXPONENT) * diameter_ft.powf(-4.871)
}

/// Resistance of a pipe for flows in cfs and head loss in ft.
pub fn pipe_resistance(pipe: &Pipe) -> f64 {
    hw_resistance(pipe.length, pipe.roughness, pipe.diameter_ft())
}

/// Resistance for flows in GPM, evaluated at roughness `c`.
pub fn pipe_resistance_gpm(pipe: &Pipe, c: f64) -> f64 {
    hw_resistance(pipe.length, c, pipe.diameter_ft()) * GPM_PER_CFS.powf(-HW_EXPONENT)
}

/// `R q |q|^(alpha-1)`.
pub fn headloss(r: f64, q: f64) -> f64 {
    r * q * q.abs().powf(HW_EXPONENT - 1.0)
}

/// Head loss along a pipe at flow `q` (GPM), ft.
pub fn pipe_headloss(pipe: &Pipe, q: f64) -> f64 {
    headloss(pipe_resistance_gpm(pipe, pipe.roughness), q)
}

/// Pump head change `-(h0 - r q^beta)`: negative means head is gained.
pub fn pump_headgain(curve: &PumpCurve, q: f64) -> Result<f64> {
    if q < 0.0 || q.is_nan() {
        return Err(Error::Domain(format!("reverse pump flow {q} GPM")));
    }
    Ok(-(curve.h0 - curve.r * q.powf(curve.beta)))
}

/// Odd extension of the pump curve used inside the Newton iteration so that
/// transient negative iterates stay well defined.
pub(crate) fn pump_headgain_ext(curve: &PumpCurve, q: f64) -> f64 {
    -(curve.h0 - curve.r * q.signum() * q.abs().powf(curve.beta))
}

pub(crate) fn pump_slope_ext(curve: &PumpCurve, q: f64) -> f64 {
    curve.beta * curve.r * q.abs().powf(curve.beta - 1.0)
}

/// Linear row contributed by a valve in a given status.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ValveEquation {
    /// `h_from - h_to = 0`.
    HeadDifference { from: NodeRef, to: NodeRef },
    /// `q = setting`.
    Flow { setting: f64 },
    /// `h_to = setting`.
    DownstreamHead { to: NodeRef, setting: f64 },
}

/// Linear constraint for a valve. PRVs additionally require `q >= 0`,
/// which is checked after the solve.
pub fn valve_equations(valve: &Valve, status: ValveStatus, setting: f64) -> ValveEquation {
    match (status, valve.kind) {
        (ValveStatus::Open, _) => ValveEquation::HeadDifference {
            from: valve.from,
            to: valve.to,
        },
        (ValveStatus::Active, ValveKind::Fcv) => ValveEquation::Flow { setting },
        (ValveStatus::Active, ValveKind::Prv) => ValveEquation::DownstreamHead {
            to: valve.to,
            setting,
        },
    }
}

/// Per-junction `inflow - outflow - demand` for state `x`.
pub fn mass_balance_residual(net: &Network, x: &[f64], d: &[f64]) -> Vec<f64> {
    let mut r: Vec<f64> = d.iter().map(|v| -v).collect();
    for l in net.links() {
        let q = x[net.flow_index(l)];
        let (a, b) = net.endpoints(l);
        if a.kind == crate::network::NodeKind::Junction {
            r[a.index] -= q;
        }
        if b.kind == crate::network::NodeKind::Junction {
            r[b.index] += q;
        }
    }
    r
}

/// Head change in ft for a net inflow (GPM) into a tank over `dt` seconds.
pub fn tank_level_change(tank: &Tank, net_inflow_gpm: f64, dt: f64) -> f64 {
    dt / tank.area() * net_inflow_gpm / GPM_PER_CFS
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TankUpdate {
    pub head: f64,
    /// Unclamped head when the update left `[min_head, max_head]`.
    pub clamped_from: Option<f64>,
}

/// Advance a tank head by one step of length `dt` seconds.
pub fn tank_update(tank: &Tank, h: f64, inflow: f64, outflow: f64, dt: f64) -> TankUpdate {
    let next = h + tank_level_change(tank, inflow - outflow, dt);
    let clamped = next.clamp(tank.min_head(), tank.max_head());
    if clamped != next {
        log::warn!(
            "tank '{}' head {next:.3} ft clamped to [{:.3}, {:.3}]",
            tank.id,
            tank.min_head(),
            tank.max_head()
        );
        TankUpdate {
            head: clamped,
            clamped_from: Some(next),
        }
    } else {
        TankUpdate {
            head: next,
            clamped_from: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pipe(length: f64, diameter_in: f64, c: f64) -> Pipe {
        Pipe {
            id: "P".into(),
            from: NodeRef::junction(0),
            to: NodeRef::junction(1),
            length,
            diameter_in,
            roughness: c,
        }
    }

    #[test]
    fn resistance_constants_cancel() {
        assert!((hw_resistance(1.0 / 4.727, 1.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn resistance_direct_evaluation() {
        // 4.727 * 1000 * 100^-1.852 = 4727 * exp(-1.852 ln 100)
        let expected = 4727.0 * (-1.852f64 * 100f64.ln()).exp();
        let r = pipe_resistance(&pipe(1000.0, 12.0, 100.0));
        assert!((r - expected).abs() < 1e-12 * expected);
        assert!((r - 0.93459).abs() < 1e-4);
    }

    #[test]
    fn doubling_roughness_scales_resistance() {
        let a = pipe_resistance(&pipe(500.0, 8.0, 80.0));
        let b = pipe_resistance(&pipe(500.0, 8.0, 160.0));
        assert!((b / a - 2f64.powf(-1.852)).abs() < 1e-12);
    }

    #[test]
    fn headloss_examples() {
        assert_eq!(headloss(3.0, 0.0), 0.0);
        assert_eq!(headloss(1.0, 1.0), 1.0);
        let v = headloss(2.0, -3.0);
        assert!((v + 2.0 * 3f64.powf(1.852)).abs() < 1e-12);
    }

    #[test]
    fn pump_examples() {
        let c = PumpCurve {
            h0: 200.0,
            r: 1e-4,
            beta: 2.0,
        };
        assert_eq!(pump_headgain(&c, 0.0).unwrap(), -200.0);
        assert!((pump_headgain(&c, 1000.0).unwrap() + 100.0).abs() < 1e-12);
        assert!(matches!(pump_headgain(&c, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn valve_rows() {
        let v = Valve {
            id: "V".into(),
            from: NodeRef::junction(0),
            to: NodeRef::junction(1),
            diameter_in: 8.0,
            kind: ValveKind::Fcv,
            setting: 500.0,
            status: ValveStatus::Active,
        };
        assert_eq!(
            valve_equations(&v, ValveStatus::Active, 500.0),
            ValveEquation::Flow { setting: 500.0 }
        );
        assert!(matches!(
            valve_equations(&v, ValveStatus::Open, 500.0),
            ValveEquation::HeadDifference { .. }
        ));
        let prv = Valve {
            kind: ValveKind::Prv,
            ..v
        };
        assert_eq!(
            valve_equations(&prv, ValveStatus::Active, 815.0),
            ValveEquation::DownstreamHead {
                to: NodeRef::junction(1),
                setting: 815.0
            }
        );
    }

    #[test]
    fn mass_balance_single_junction() {
        let net = crate::bundled::three_node();
        // J2 receives the pump flow and feeds the pipe
        let mut x = vec![0.0; net.n_x()];
        x[net.flow_index(crate::network::LinkRef::pump(0))] = 110.0;
        x[net.flow_index(crate::network::LinkRef::pipe(0))] = 10.0;
        let r = mass_balance_residual(&net, &x, &[100.0]);
        assert_eq!(r, vec![0.0]);
        assert_eq!(mass_balance_residual(&net, &vec![0.0; net.n_x()], &[0.0]), vec![0.0]);
    }

    fn tank(diameter: f64) -> Tank {
        Tank {
            id: "T".into(),
            elevation: 0.0,
            initial_level: 10.0,
            min_level: 0.0,
            max_level: 1000.0,
            diameter,
        }
    }

    #[test]
    fn tank_arithmetic() {
        let t = tank((400.0 / std::f64::consts::PI).sqrt());
        assert!((t.area() - 100.0).abs() < 1e-12);
        assert_eq!(tank_update(&t, 10.0, 5.0, 5.0, 3600.0).head, 10.0);
        // 1 cfs for 100 s into 100 ft2
        let u = tank_update(&t, 10.0, GPM_PER_CFS, 0.0, 100.0);
        assert!((u.head - 11.0).abs() < 1e-12);
        assert!(u.clamped_from.is_none());
    }

    #[test]
    fn tank_clamps() {
        let t = tank(1.0);
        let u = tank_update(&t, 999.0, 1e6, 0.0, 3600.0);
        assert_eq!(u.head, 1000.0);
        assert!(u.clamped_from.unwrap() > 1000.0);
    }

    proptest! {
        #[test]
        fn headloss_is_odd(r in 1e-6f64..1e3, q in -1e4f64..1e4) {
            prop_assert_eq!(headloss(r, -q), -headloss(r, q));
        }

        #[test]
        fn pump_gain_decreasing(h0 in 1.0f64..500.0, r in 1e-6f64..1.0, beta in 0.5f64..3.0,
                                q in 0.0f64..1e3, dq in 1e-3f64..10.0) {
            let c = PumpCurve { h0, r, beta };
            prop_assert!(pump_headgain(&c, q + dq).unwrap() >= pump_headgain(&c, q).unwrap());
        }

        #[test]
        fn tank_conserves_volume(d in 1.0f64..200.0, q in -5e3f64..5e3, dt in 1.0f64..7200.0) {
            let t = Tank { min_level: -1e9, max_level: 1e9, ..tank(d) };
            let u = tank_update(&t, 10.0, q.max(0.0), (-q).max(0.0), dt);
            let vol = t.area() * (u.head - 10.0);
            let expected = dt * q / GPM_PER_CFS;
            prop_assert!((vol - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        }
    }
}
