//! Typed water network graph and the state-vector index map.
//!
//! Node order is junctions, reservoirs, tanks; link order is pipes, pumps,
//! valves. Every head/flow index in the crate is derived from that order.

mod incidence;
mod topology;

pub use incidence::{build_incidence, IncidenceMatrix};
pub use topology::{validate_topology, validate_topology_with, Finding, TopologyReport};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hazen-Williams flow exponent.
pub const HW_EXPONENT: f64 = 1.852;
/// GPM in one cubic foot per second.
pub const GPM_PER_CFS: f64 = 448.831;
/// Lower bound applied to head-loss slopes so zero-flow links keep a nonzero
/// Jacobian entry (ft per GPM).
pub const SLOPE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Junction,
    Reservoir,
    Tank,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkKind {
    Pipe,
    Pump,
    Valve,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub kind: NodeKind,
    pub index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkRef {
    pub kind: LinkKind,
    pub index: usize,
}

impl NodeRef {
    pub fn junction(index: usize) -> Self {
        Self { kind: NodeKind::Junction, index }
    }
    pub fn reservoir(index: usize) -> Self {
        Self { kind: NodeKind::Reservoir, index }
    }
    pub fn tank(index: usize) -> Self {
        Self { kind: NodeKind::Tank, index }
    }
}

impl LinkRef {
    pub fn pipe(index: usize) -> Self {
        Self { kind: LinkKind::Pipe, index }
    }
    pub fn pump(index: usize) -> Self {
        Self { kind: LinkKind::Pump, index }
    }
    pub fn valve(index: usize) -> Self {
        Self { kind: LinkKind::Valve, index }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Junction {
    pub id: String,
    pub elevation: f64,
    /// GPM.
    pub base_demand: f64,
    pub pattern: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reservoir {
    pub id: String,
    pub head: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tank {
    pub id: String,
    pub elevation: f64,
    pub initial_level: f64,
    pub min_level: f64,
    pub max_level: f64,
    /// ft.
    pub diameter: f64,
}

impl Tank {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.diameter * self.diameter / 4.0
    }
    pub fn initial_head(&self) -> f64 {
        self.elevation + self.initial_level
    }
    pub fn min_head(&self) -> f64 {
        self.elevation + self.min_level
    }
    pub fn max_head(&self) -> f64 {
        self.elevation + self.max_level
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pipe {
    pub id: String,
    pub from: NodeRef,
    pub to: NodeRef,
    /// ft.
    pub length: f64,
    /// Inches, as written in network files.
    pub diameter_in: f64,
    /// Hazen-Williams C.
    pub roughness: f64,
}

impl Pipe {
    pub fn diameter_ft(&self) -> f64 {
        self.diameter_in / 12.0
    }
}

/// Power-law pump curve: head gain `h0 - r q^beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpCurve {
    pub h0: f64,
    pub r: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pump {
    pub id: String,
    pub from: NodeRef,
    pub to: NodeRef,
    pub curve_id: String,
    pub curve: PumpCurve,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ValveKind {
    Fcv,
    Prv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValveStatus {
    Open,
    Active,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Valve {
    pub id: String,
    pub from: NodeRef,
    pub to: NodeRef,
    /// Inches.
    pub diameter_in: f64,
    pub kind: ValveKind,
    /// GPM for FCVs, ft of head for PRVs.
    pub setting: f64,
    pub status: ValveStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    pub id: String,
    pub multipliers: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub id: String,
    pub points: Vec<(f64, f64)>,
}

/// Simulation clock, all in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Times {
    pub duration: f64,
    pub hydraulic_step: f64,
    pub pattern_step: f64,
}

impl Default for Times {
    fn default() -> Self {
        Self {
            duration: 0.0,
            hydraulic_step: 3600.0,
            pattern_step: 3600.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Network {
    pub title: Vec<String>,
    pub junctions: Vec<Junction>,
    pub reservoirs: Vec<Reservoir>,
    pub tanks: Vec<Tank>,
    pub pipes: Vec<Pipe>,
    pub pumps: Vec<Pump>,
    pub valves: Vec<Valve>,
    pub patterns: Vec<Pattern>,
    pub curves: Vec<Curve>,
    pub times: Times,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Head,
    Flow,
}

impl StateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StateKind::Head => "head",
            StateKind::Flow => "flow",
        }
    }
}

/// Reference to one entry of the state vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StateRef {
    Head(NodeRef),
    Flow(LinkRef),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateLabel {
    pub id: String,
    pub kind: StateKind,
}

impl std::fmt::Display for StateLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = match self.kind {
            StateKind::Head => 'h',
            StateKind::Flow => 'q',
        };
        write!(f, "{p}[{}]", self.id)
    }
}

impl Network {
    pub fn n_j(&self) -> usize {
        self.junctions.len()
    }
    pub fn n_r(&self) -> usize {
        self.reservoirs.len()
    }
    pub fn n_t(&self) -> usize {
        self.tanks.len()
    }
    pub fn n_p(&self) -> usize {
        self.pipes.len()
    }
    pub fn n_m(&self) -> usize {
        self.pumps.len()
    }
    pub fn n_l(&self) -> usize {
        self.valves.len()
    }
    pub fn n_h(&self) -> usize {
        self.n_j() + self.n_r() + self.n_t()
    }
    pub fn n_q(&self) -> usize {
        self.n_p() + self.n_m() + self.n_l()
    }
    pub fn n_x(&self) -> usize {
        self.n_h() + self.n_q()
    }

    pub fn node_id(&self, n: NodeRef) -> &str {
        match n.kind {
            NodeKind::Junction => &self.junctions[n.index].id,
            NodeKind::Reservoir => &self.reservoirs[n.index].id,
            NodeKind::Tank => &self.tanks[n.index].id,
        }
    }

    pub fn link_id(&self, l: LinkRef) -> &str {
        match l.kind {
            LinkKind::Pipe => &self.pipes[l.index].id,
            LinkKind::Pump => &self.pumps[l.index].id,
            LinkKind::Valve => &self.valves[l.index].id,
        }
    }

    /// Global head index (row of the incidence matrix).
    pub fn head_index(&self, n: NodeRef) -> usize {
        match n.kind {
            NodeKind::Junction => n.index,
            NodeKind::Reservoir => self.n_j() + n.index,
            NodeKind::Tank => self.n_j() + self.n_r() + n.index,
        }
    }

    /// Link ordinal across pipes, pumps and valves (column of the incidence matrix).
    pub fn link_index(&self, l: LinkRef) -> usize {
        match l.kind {
            LinkKind::Pipe => l.index,
            LinkKind::Pump => self.n_p() + l.index,
            LinkKind::Valve => self.n_p() + self.n_m() + l.index,
        }
    }

    /// Position of a flow in the state vector.
    pub fn flow_index(&self, l: LinkRef) -> usize {
        self.n_h() + self.link_index(l)
    }

    pub fn state_index(&self, s: StateRef) -> usize {
        match s {
            StateRef::Head(n) => self.head_index(n),
            StateRef::Flow(l) => self.flow_index(l),
        }
    }

    pub fn node_at(&self, head_index: usize) -> NodeRef {
        let (nj, nr) = (self.n_j(), self.n_r());
        if head_index < nj {
            NodeRef::junction(head_index)
        } else if head_index < nj + nr {
            NodeRef::reservoir(head_index - nj)
        } else {
            NodeRef::tank(head_index - nj - nr)
        }
    }

    pub fn link_at(&self, link_index: usize) -> LinkRef {
        let (np, nm) = (self.n_p(), self.n_m());
        if link_index < np {
            LinkRef::pipe(link_index)
        } else if link_index < np + nm {
            LinkRef::pump(link_index - np)
        } else {
            LinkRef::valve(link_index - np - nm)
        }
    }

    pub fn state_at(&self, i: usize) -> StateRef {
        if i < self.n_h() {
            StateRef::Head(self.node_at(i))
        } else {
            StateRef::Flow(self.link_at(i - self.n_h()))
        }
    }

    pub fn endpoints(&self, l: LinkRef) -> (NodeRef, NodeRef) {
        match l.kind {
            LinkKind::Pipe => (self.pipes[l.index].from, self.pipes[l.index].to),
            LinkKind::Pump => (self.pumps[l.index].from, self.pumps[l.index].to),
            LinkKind::Valve => (self.valves[l.index].from, self.valves[l.index].to),
        }
    }

    /// All links in state order.
    pub fn links(&self) -> impl Iterator<Item = LinkRef> + '_ {
        (0..self.n_q()).map(|i| self.link_at(i))
    }

    /// All nodes in state order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeRef> + '_ {
        (0..self.n_h()).map(|i| self.node_at(i))
    }

    pub fn state_labels(&self) -> Vec<StateLabel> {
        let mut out = Vec::with_capacity(self.n_x());
        for n in self.nodes() {
            out.push(StateLabel {
                id: self.node_id(n).to_string(),
                kind: StateKind::Head,
            });
        }
        for l in self.links() {
            out.push(StateLabel {
                id: self.link_id(l).to_string(),
                kind: StateKind::Flow,
            });
        }
        out
    }

    pub fn find_node(&self, id: &str) -> Option<NodeRef> {
        self.nodes().find(|&n| self.node_id(n) == id)
    }

    pub fn find_link(&self, id: &str) -> Option<LinkRef> {
        self.links().find(|&l| self.link_id(l) == id)
    }

    /// Resolve `id` as a state of the requested kind.
    pub fn find_state(&self, id: &str, kind: StateKind) -> Option<StateRef> {
        match kind {
            StateKind::Head => self.find_node(id).map(StateRef::Head),
            StateKind::Flow => self.find_link(id).map(StateRef::Flow),
        }
    }

    pub fn node_lookup(&self) -> HashMap<&str, NodeRef> {
        self.nodes().map(|n| (self.node_id(n), n)).collect()
    }

    pub fn pattern(&self, id: &str) -> Option<&Pattern> {
        self.patterns.iter().find(|p| p.id == id)
    }

    /// Pattern multiplier in effect at hydraulic step `k`.
    pub fn pattern_multiplier(&self, pattern: Option<&str>, k: usize) -> f64 {
        let Some(p) = pattern.and_then(|id| self.pattern(id)) else {
            return 1.0;
        };
        if p.multipliers.is_empty() {
            return 1.0;
        }
        let t = k as f64 * self.times.hydraulic_step;
        let step = if self.times.pattern_step > 0.0 {
            self.times.pattern_step
        } else {
            self.times.hydraulic_step
        };
        let slot = if step > 0.0 { (t / step).floor() as usize } else { 0 };
        p.multipliers[slot % p.multipliers.len()]
    }

    /// Base demands scaled by their patterns at step `k` (GPM).
    pub fn demands_at(&self, k: usize) -> Vec<f64> {
        self.junctions
            .iter()
            .map(|j| j.base_demand * self.pattern_multiplier(j.pattern.as_deref(), k))
            .collect()
    }

    /// Check the value-level invariants of every component.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &'static str, id: &str, reason: &str| Error::InvalidComponent {
            what,
            id: id.to_string(),
            reason: reason.to_string(),
        };
        let mut seen = HashMap::new();
        for n in self.nodes() {
            if let Some(prev) = seen.insert(self.node_id(n), n) {
                let _ = prev;
                return Err(bad("node", self.node_id(n), "duplicate id"));
            }
        }
        let mut seen = HashMap::new();
        for l in self.links() {
            if seen.insert(self.link_id(l), l).is_some() {
                return Err(bad("link", self.link_id(l), "duplicate id"));
            }
        }
        for j in &self.junctions {
            if !j.base_demand.is_finite() || !j.elevation.is_finite() {
                return Err(bad("junction", &j.id, "non-finite value"));
            }
        }
        for r in &self.reservoirs {
            if !r.head.is_finite() {
                return Err(bad("reservoir", &r.id, "non-finite head"));
            }
        }
        for t in &self.tanks {
            if !(t.diameter > 0.0) || !t.diameter.is_finite() {
                return Err(bad("tank", &t.id, "diameter must be positive"));
            }
            if !(t.min_level <= t.initial_level && t.initial_level <= t.max_level) {
                return Err(bad("tank", &t.id, "levels must satisfy min <= initial <= max"));
            }
        }
        for p in &self.pipes {
            if !(p.length > 0.0 && p.diameter_in > 0.0 && p.roughness > 0.0)
                || !(p.length.is_finite() && p.diameter_in.is_finite() && p.roughness.is_finite())
            {
                return Err(bad("pipe", &p.id, "length, diameter and roughness must be positive"));
            }
        }
        for m in &self.pumps {
            let c = m.curve;
            if !(c.h0 > 0.0 && c.r > 0.0 && c.beta > 0.0)
                || !(c.h0.is_finite() && c.r.is_finite() && c.beta.is_finite())
            {
                return Err(bad("pump", &m.id, "curve needs h0, r, beta > 0"));
            }
        }
        for v in &self.valves {
            if !v.setting.is_finite() {
                return Err(bad("valve", &v.id, "non-finite setting"));
            }
        }
        for l in self.links() {
            let (a, b) = self.endpoints(l);
            for n in [a, b] {
                let count = match n.kind {
                    NodeKind::Junction => self.n_j(),
                    NodeKind::Reservoir => self.n_r(),
                    NodeKind::Tank => self.n_t(),
                };
                if n.index >= count {
                    return Err(Error::Structure(format!(
                        "link '{}' has a dangling endpoint",
                        self.link_id(l)
                    )));
                }
            }
            if a == b {
                return Err(Error::Structure(format!(
                    "link '{}' connects node '{}' to itself",
                    self.link_id(l),
                    self.node_id(a)
                )));
            }
        }
        Ok(())
    }
}
