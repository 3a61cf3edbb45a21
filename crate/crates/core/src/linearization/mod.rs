//! First-order models of pipes and pumps, assembly of the per-step and
//! horizon linear systems, and rank diagnostics.

mod assembly;
mod rank;

pub use assembly::{
    assemble_e, assemble_step, assemble_system, ColLabel, LinearSystem, RowKind, RowLabel,
    StepSystem, TankCoupling,
};
pub use rank::{rank_check, RankReport};

use crate::hydraulics::{headloss, pipe_resistance_gpm, pump_headgain_ext, StepConditions};
use crate::network::{LinkRef, Network, Pipe, PumpCurve, HW_EXPONENT, SLOPE_FLOOR};

/// Tangent model `dh = k_q q + k_c c + b` of a link's head drop (from minus to).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct LinearizedLink {
    /// ft per GPM.
    pub k_q: f64,
    /// ft per unit of Hazen-Williams C (pipes only).
    pub k_c: f64,
    /// ft.
    pub b: f64,
    /// The slope floor replaced a smaller derivative.
    pub floored: bool,
}

pub fn linearize_pipe(pipe: &Pipe, q0: f64, c0: f64) -> LinearizedLink {
    let r = pipe_resistance_gpm(pipe, c0);
    let raw = HW_EXPONENT * r * q0.abs().powf(HW_EXPONENT - 1.0);
    let k_q = raw.max(SLOPE_FLOOR);
    let k_c = -HW_EXPONENT * headloss(r, q0) / c0;
    let b = headloss(r, q0) - k_q * q0 - k_c * c0;
    LinearizedLink {
        k_q,
        k_c,
        b,
        floored: raw < SLOPE_FLOOR,
    }
}

pub fn linearize_pump(curve: &PumpCurve, q0: f64) -> LinearizedLink {
    let raw = curve.beta * curve.r * q0.abs().powf(curve.beta - 1.0);
    let k_q = raw.max(SLOPE_FLOOR);
    let b = pump_headgain_ext(curve, q0) - k_q * q0;
    LinearizedLink {
        k_q,
        k_c: 0.0,
        b,
        floored: !(raw >= SLOPE_FLOOR),
    }
}

/// Tangent models of every pipe and pump at state `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedLinks {
    pub pipes: Vec<LinearizedLink>,
    pub pumps: Vec<LinearizedLink>,
}

impl LinearizedLinks {
    pub fn at(net: &Network, cond: &StepConditions, x: &[f64]) -> Self {
        let pipes = net
            .pipes
            .iter()
            .enumerate()
            .map(|(i, p)| linearize_pipe(p, x[net.flow_index(LinkRef::pipe(i))], cond.roughness[i]))
            .collect();
        let pumps = net
            .pumps
            .iter()
            .enumerate()
            .map(|(i, m)| linearize_pump(&m.curve, x[net.flow_index(LinkRef::pump(i))]))
            .collect();
        let out = Self { pipes, pumps };
        for (i, l) in out.pipes.iter().enumerate() {
            if l.floored {
                log::debug!("slope floor active on pipe '{}'", net.pipes[i].id);
            }
        }
        for (i, l) in out.pumps.iter().enumerate() {
            if l.floored {
                log::debug!("slope floor active on pump '{}'", net.pumps[i].id);
            }
        }
        out
    }
}
