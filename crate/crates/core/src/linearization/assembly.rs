use std::fmt::Write;

use super::LinearizedLinks;
use crate::error::{Error, Result};
use crate::hydraulics::{valve_equations, StepConditions, ValveControl, ValveEquation};
use crate::network::{LinkKind, Network, NodeKind, StateLabel, StateRef, GPM_PER_CFS};
use crate::scenario::Measurement;
use crate::sparse::CooMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Mass,
    Energy,
    Valve,
    Measurement,
    Tank,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub struct RowLabel {
    pub kind: RowKind,
    pub id: String,
    pub step: usize,
}

impl std::fmt::Display for RowLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let k = match self.kind {
            RowKind::Mass => "mass",
            RowKind::Energy => "energy",
            RowKind::Valve => "valve",
            RowKind::Measurement => "meas",
            RowKind::Tank => "tank",
        };
        write!(f, "{k}[{}]@{}", self.id, self.step)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub struct ColLabel {
    pub state: StateLabel,
    pub step: usize,
}

impl std::fmt::Display for ColLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}", self.state, self.step)
    }
}

/// Hydraulic rows: mass balance, pipe and pump energy, valve constraints.
///
/// Returns `E` ((n_j + n_q) × n_x), its right-hand side `z` at the given demands
/// and roughness, and the row labels.
pub fn assemble_e(
    net: &Network,
    links: &LinearizedLinks,
    valves: &[ValveControl],
    demands: &[f64],
    roughness: &[f64],
    step: usize,
) -> Result<(CooMatrix, Vec<f64>, Vec<RowLabel>)> {
    if links.pipes.len() != net.n_p()
        || links.pumps.len() != net.n_m()
        || valves.len() != net.n_l()
        || demands.len() != net.n_j()
        || roughness.len() != net.n_p()
    {
        return Err(Error::Structure(
            "linearization inputs do not match the network dimensions".into(),
        ));
    }
    let nj = net.n_j();
    let mut e = CooMatrix::new(nj + net.n_q(), net.n_x());
    let mut z = Vec::with_capacity(nj + net.n_q());
    let mut rows = Vec::with_capacity(nj + net.n_q());
    for l in net.links() {
        let (from, to) = net.endpoints(l);
        let col = net.flow_index(l);
        if from.kind == NodeKind::Junction {
            e.push(from.index, col, -1.0);
        }
        if to.kind == NodeKind::Junction {
            e.push(to.index, col, 1.0);
        }
    }
    for (j, junction) in net.junctions.iter().enumerate() {
        z.push(demands[j]);
        rows.push(RowLabel {
            kind: RowKind::Mass,
            id: junction.id.clone(),
            step,
        });
    }
    for l in net.links() {
        let row = nj + net.link_index(l);
        let col = net.flow_index(l);
        let (from, to) = net.endpoints(l);
        let (hf, ht) = (net.head_index(from), net.head_index(to));
        let kind = match l.kind {
            LinkKind::Pipe => {
                let t = links.pipes[l.index];
                e.push(row, hf, 1.0);
                e.push(row, ht, -1.0);
                e.push(row, col, -t.k_q);
                z.push(t.k_c * roughness[l.index] + t.b);
                RowKind::Energy
            }
            LinkKind::Pump => {
                let t = links.pumps[l.index];
                e.push(row, hf, 1.0);
                e.push(row, ht, -1.0);
                e.push(row, col, -t.k_q);
                z.push(t.b);
                RowKind::Energy
            }
            LinkKind::Valve => {
                let c = valves[l.index];
                match valve_equations(&net.valves[l.index], c.status, c.setting) {
                    ValveEquation::HeadDifference { .. } => {
                        e.push(row, hf, 1.0);
                        e.push(row, ht, -1.0);
                        z.push(0.0);
                    }
                    ValveEquation::Flow { setting } => {
                        e.push(row, col, 1.0);
                        z.push(setting);
                    }
                    ValveEquation::DownstreamHead { setting, .. } => {
                        e.push(row, ht, 1.0);
                        z.push(setting);
                    }
                }
                RowKind::Valve
            }
        };
        rows.push(RowLabel {
            kind,
            id: net.link_id(l).to_string(),
            step,
        });
    }
    Ok((e, z, rows))
}

/// The merged per-step system `A^s(k) x = b^s(k)` (hydraulic rows then measurement rows).
#[derive(Clone, Debug, PartialEq)]
pub struct StepSystem {
    pub step: usize,
    pub a: CooMatrix,
    /// Right-hand side at the mean of every source.
    pub b: Vec<f64>,
    pub rows: Vec<RowLabel>,
    pub links: LinearizedLinks,
    /// Operating point the system was linearized at.
    pub x0: Vec<f64>,
    /// Number of hydraulic rows (the height of `E`).
    pub n_e: usize,
    /// Measurement rows, aligned with the rows after `n_e`.
    pub measurements: Vec<Measurement>,
}

impl StepSystem {
    pub fn is_square(&self) -> bool {
        self.a.nrows == self.a.ncols
    }
}

/// Measured value of `m` at this step: the given value, else the fixed head
/// in `cond`, else the operating point.
fn measured_value(net: &Network, m: &Measurement, cond: &StepConditions, x0: &[f64]) -> f64 {
    if let Some(v) = m.value {
        return v;
    }
    match m.state {
        StateRef::Head(n) if n.kind != NodeKind::Junction => {
            cond.fixed_heads[net.head_index(n) - net.n_j()]
        }
        s => x0[net.state_index(s)],
    }
}

pub fn assemble_step(
    net: &Network,
    measurements: &[Measurement],
    cond: &StepConditions,
    x0: &[f64],
    step: usize,
) -> Result<StepSystem> {
    if x0.len() != net.n_x() {
        return Err(Error::Structure(format!(
            "operating point has {} entries, expected {}",
            x0.len(),
            net.n_x()
        )));
    }
    let links = LinearizedLinks::at(net, cond, x0);
    let (mut a, mut b, mut rows) =
        assemble_e(net, &links, &cond.valves, &cond.demands, &cond.roughness, step)?;
    let n_e = a.nrows;
    a.nrows += measurements.len();
    for (i, m) in measurements.iter().enumerate() {
        a.push(n_e + i, net.state_index(m.state), 1.0);
        b.push(measured_value(net, m, cond, x0));
        let id = match m.state {
            StateRef::Head(n) => net.node_id(n).to_string(),
            StateRef::Flow(l) => net.link_id(l).to_string(),
        };
        rows.push(RowLabel {
            kind: RowKind::Measurement,
            id,
            step,
        });
    }
    Ok(StepSystem {
        step,
        a,
        b,
        rows,
        links,
        x0: x0.to_vec(),
        n_e,
        measurements: measurements.to_vec(),
    })
}

/// How tank heads after the first step are tied down in the horizon system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TankCoupling {
    /// Tanks keep their measurement row at every step and tank rows link
    /// consecutive steps (over-determined for T > 1).
    #[default]
    MeasuredEveryStep,
    /// Tank measurement rows only at the first step; later tank heads follow
    /// from the tank rows alone.
    AnchoredAtFirstStep,
}

/// Block system over a horizon: per-step blocks on the diagonal plus tank rows.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    pub a: CooMatrix,
    pub b: Vec<f64>,
    pub rows: Vec<RowLabel>,
    pub cols: Vec<ColLabel>,
    pub steps: Vec<StepSystem>,
    /// For every row of `a`: `(step, row within that step's system)`, or `None` for tank rows.
    pub row_origin: Vec<Option<(usize, usize)>>,
    pub coupling: TankCoupling,
}

/// Stack per-step systems into the horizon system with tank-dynamics rows
/// `h(k) + dt/A * (net inflow at k) - h(k+1) = 0`.
pub fn assemble_system(
    net: &Network,
    steps: Vec<StepSystem>,
    dt: f64,
    coupling: TankCoupling,
) -> Result<LinearSystem> {
    if steps.is_empty() {
        return Err(Error::Structure("horizon system needs at least one step".into()));
    }
    let n = net.n_x();
    let t = steps.len();
    let labels = net.state_labels();
    let mut a = CooMatrix::new(0, n * t);
    let mut b = Vec::new();
    let mut rows = Vec::new();
    let mut row_origin = Vec::new();
    for (k, s) in steps.iter().enumerate() {
        if s.a.ncols != n {
            return Err(Error::Structure("step system width mismatch".into()));
        }
        let keep: Vec<bool> = (0..s.a.nrows)
            .map(|r| {
                if r < s.n_e || k == 0 || coupling == TankCoupling::MeasuredEveryStep {
                    return true;
                }
                let m = &s.measurements[r - s.n_e];
                !matches!(m.state, StateRef::Head(nr) if nr.kind == NodeKind::Tank)
            })
            .collect();
        let mut map = vec![usize::MAX; s.a.nrows];
        for r in 0..s.a.nrows {
            if keep[r] {
                map[r] = a.nrows;
                a.nrows += 1;
                b.push(s.b[r]);
                rows.push(s.rows[r].clone());
                row_origin.push(Some((k, r)));
            }
        }
        for &(r, c, v) in &s.a.entries {
            if keep[r] {
                a.push(map[r], k * n + c, v);
            }
        }
    }
    for k in 0..t.saturating_sub(1) {
        for (ti, tank) in net.tanks.iter().enumerate() {
            let node = crate::network::NodeRef::tank(ti);
            let hi = net.head_index(node);
            let row = a.nrows;
            a.nrows += 1;
            a.push(row, k * n + hi, 1.0);
            a.push(row, (k + 1) * n + hi, -1.0);
            let gain = dt / (tank.area() * GPM_PER_CFS);
            for l in net.links() {
                let (from, to) = net.endpoints(l);
                let col = k * n + net.flow_index(l);
                if to == node {
                    a.push(row, col, gain);
                }
                if from == node {
                    a.push(row, col, -gain);
                }
            }
            b.push(0.0);
            rows.push(RowLabel {
                kind: RowKind::Tank,
                id: tank.id.clone(),
                step: k,
            });
            row_origin.push(None);
        }
    }
    let cols = (0..t)
        .flat_map(|k| {
            labels.iter().map(move |l| ColLabel {
                state: l.clone(),
                step: k,
            })
        })
        .collect();
    Ok(LinearSystem {
        a,
        b,
        rows,
        cols,
        steps,
        row_origin,
        coupling,
    })
}

impl LinearSystem {
    /// Coordinate dump with a label header, for diffing.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# rows {} cols {}", self.a.nrows, self.a.ncols);
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(s, "# row {i} {r} b={:.12e}", self.b[i]);
        }
        for (i, c) in self.cols.iter().enumerate() {
            let _ = writeln!(s, "# col {i} {c}");
        }
        let mut entries = self.a.entries.clone();
        entries.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        for (r, c, v) in entries {
            let _ = writeln!(s, "{r} {c} {v:.12e}");
        }
        s
    }
}
