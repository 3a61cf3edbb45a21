//! Uncertainty scenarios: which sources are random, how much, and what is measured.
//!
//! Scenario files are JSON. Margins of error (`me_percent`) are converted to
//! standard deviations with `sigma = a * |mean| / (100 z)`, where `z` comes from
//! the scenario's `confidence` level.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydraulics::{DemandSchedule, ValveSchedule, ValveScheduleEntry};
use crate::network::{LinkKind, Network, NodeKind, StateKind, StateRef};

/// Default reference head for head-measurement margins of error (ft).
pub const NOISE_REFERENCE_FT: f64 = 40.0;

/// Two-sided standard normal quantile for a supported confidence level.
pub fn z_value(confidence: f64) -> Result<f64> {
    const LEVELS: [(f64, f64); 3] = [(0.80, 1.282), (0.95, 1.960), (0.99, 2.576)];
    LEVELS
        .iter()
        .find(|(c, _)| (c - confidence).abs() < 1e-9)
        .map(|&(_, z)| z)
        .ok_or_else(|| {
            Error::Scenario(format!(
                "unsupported confidence level {confidence}; use 0.80, 0.95 or 0.99"
            ))
        })
}

/// Standard deviation implied by a margin of error of `me_percent` around `mean`.
pub fn me_to_sigma(me_percent: f64, mean: f64, z: f64) -> f64 {
    me_percent * mean.abs() / (100.0 * z)
}

/// Margin of error (percent) of `sigma` around `mean`.
pub fn sigma_to_me(sigma: f64, mean: f64, z: f64) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    100.0 * z * sigma / mean.abs()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[default]
    Normal,
    Uniform,
    Laplace,
}

/// Spread of one random quantity; at most one field may be set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dispersion {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub me_percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
}

impl Dispersion {
    pub fn me(a: f64) -> Self {
        Self {
            me_percent: Some(a),
            ..Default::default()
        }
    }

    pub fn variance(v: f64) -> Self {
        Self {
            variance: Some(v),
            ..Default::default()
        }
    }

    pub fn is_set(&self) -> bool {
        self.me_percent.is_some() || self.sigma.is_some() || self.variance.is_some()
    }

    /// Variance around `mean` (the reference for relative margins of error).
    pub fn resolve(&self, mean: f64, z: f64, what: &str) -> Result<f64> {
        let set = [self.me_percent, self.sigma, self.variance]
            .iter()
            .filter(|v| v.is_some())
            .count();
        if set > 1 {
            return Err(Error::Scenario(format!(
                "{what}: give only one of me_percent, sigma, variance"
            )));
        }
        let var = if let Some(a) = self.me_percent {
            check_nonneg(a, what, "margin of error")?;
            me_to_sigma(a, mean, z).powi(2)
        } else if let Some(s) = self.sigma {
            check_nonneg(s, what, "sigma")?;
            s * s
        } else if let Some(v) = self.variance {
            check_nonneg(v, what, "variance")?;
            v
        } else {
            0.0
        };
        Ok(var)
    }
}

fn check_nonneg(v: f64, what: &str, field: &str) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Scenario(format!(
            "{what}: {field} must be finite and non-negative, got {v}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default)]
    pub family: Family,
    #[serde(flatten)]
    pub dispersion: Dispersion,
    /// Per-component spread replacing the default.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, Dispersion>,
    /// Per-junction mean demands by step (demand source only).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub means: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    pub id: String,
    #[serde(default = "head_kind")]
    pub kind: StateKind,
    #[serde(flatten)]
    pub dispersion: Dispersion,
    /// Measured value; defaults to the network's fixed head for reservoirs and
    /// tanks, and to the nominal operating point otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default)]
    pub family: Family,
}

fn head_kind() -> StateKind {
    StateKind::Head
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowClass {
    Mass,
    Energy,
    Valve,
    Measurement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowWeightConfig {
    pub class: RowClass,
    pub id: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "one")]
    pub energy: f64,
    #[serde(default = "one")]
    pub valve: f64,
    #[serde(default = "one")]
    pub measurement: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<RowWeightConfig>,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            energy: 1.0,
            valve: 1.0,
            measurement: 1.0,
            rows: Vec::new(),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_confidence() -> f64 {
    0.99
}

fn default_noise_reference() -> f64 {
    NOISE_REFERENCE_FT
}

/// Scenario file contents, before resolution against a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "one_step")]
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_step_s: Option<f64>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "default_noise_reference")]
    pub noise_reference_ft: f64,
    #[serde(default)]
    pub demand: SourceConfig,
    #[serde(default)]
    pub roughness: SourceConfig,
    #[serde(default)]
    pub measurements: Vec<MeasurementConfig>,
    #[serde(default)]
    pub weights: WeightConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valve_schedule: Option<Vec<ValveScheduleEntry>>,
}

fn one_step() -> usize {
    1
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            horizon: 1,
            time_step_s: None,
            confidence: 0.99,
            noise_reference_ft: NOISE_REFERENCE_FT,
            demand: SourceConfig::default(),
            roughness: SourceConfig::default(),
            measurements: Vec::new(),
            weights: WeightConfig::default(),
            valve_schedule: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub state: StateRef,
    pub label: String,
    pub variance: f64,
    pub family: Family,
    pub value: Option<f64>,
}

impl Measurement {
    /// Reservoir or tank head: part of the sufficient measurement set.
    pub fn is_fixed_head(&self) -> bool {
        matches!(self.state, StateRef::Head(n) if n.kind != NodeKind::Junction)
    }
}

/// Row weights resolved by class with per-row overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct RowWeights {
    pub mass: f64,
    pub energy: f64,
    pub valve: f64,
    pub measurement: f64,
    pub overrides: BTreeMap<(RowClass, String), f64>,
}

impl Default for RowWeights {
    fn default() -> Self {
        Self {
            mass: 1.0,
            energy: 1.0,
            valve: 1.0,
            measurement: 1.0,
            overrides: BTreeMap::new(),
        }
    }
}

impl RowWeights {
    pub fn get(&self, class: RowClass, id: &str) -> f64 {
        if let Some(w) = self.overrides.get(&(class, id.to_string())) {
            return *w;
        }
        match class {
            RowClass::Mass => self.mass,
            RowClass::Energy => self.energy,
            RowClass::Valve => self.valve,
            RowClass::Measurement => self.measurement,
        }
    }

    pub fn is_identity(&self) -> bool {
        [self.mass, self.energy, self.valve, self.measurement]
            .iter()
            .chain(self.overrides.values())
            .all(|w| *w == 1.0)
    }
}

/// A scenario resolved against a network: variances per component and step.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub horizon: usize,
    /// Seconds.
    pub dt: f64,
    pub confidence: f64,
    pub demand_family: Family,
    pub roughness_family: Family,
    pub demand_means: DemandSchedule,
    /// `[step][junction]`.
    pub demand_var: Vec<Vec<f64>>,
    pub roughness_means: Vec<f64>,
    pub roughness_var: Vec<f64>,
    /// Fixed heads first (reservoirs, then tanks), then extra measurements in file order.
    pub measurements: Vec<Measurement>,
    pub weights: RowWeights,
    pub valve_schedule: Option<ValveSchedule>,
}

impl Scenario {
    /// True when the measurements are exactly the reservoir and tank heads.
    pub fn is_sufficient(&self) -> bool {
        self.measurements.iter().all(Measurement::is_fixed_head)
    }

    pub fn extra_measurements(&self) -> impl Iterator<Item = &Measurement> {
        self.measurements.iter().filter(|m| !m.is_fixed_head())
    }

    /// A scenario with no randomness on the network's nominal data.
    pub fn deterministic(net: &Network, horizon: usize) -> Self {
        let mut cfg = ScenarioConfig {
            horizon,
            ..Default::default()
        };
        cfg.name = "deterministic".into();
        cfg.resolve(net).expect("default scenario resolves")
    }
}

impl ScenarioConfig {
    pub fn resolve(&self, net: &Network) -> Result<Scenario> {
        if self.horizon == 0 {
            return Err(Error::Scenario("horizon must be at least 1".into()));
        }
        let z = z_value(self.confidence)?;
        if !(self.noise_reference_ft > 0.0) {
            return Err(Error::Scenario("noise_reference_ft must be positive".into()));
        }
        let dt = self.time_step_s.unwrap_or(net.times.hydraulic_step);
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Scenario("time step must be positive".into()));
        }
        let t = self.horizon;

        let mut demand_means = DemandSchedule::from_patterns(net, t);
        for (id, series) in &self.demand.means {
            let j = junction(net, id, "demand mean")?;
            if series.is_empty() {
                return Err(Error::Scenario(format!("demand means for '{id}' are empty")));
            }
            if series.iter().any(|v| !v.is_finite()) {
                return Err(Error::Scenario(format!("non-finite demand mean for '{id}'")));
            }
            for k in 0..t {
                demand_means.means[j][k] = series[k.min(series.len() - 1)];
            }
        }
        for id in self.demand.overrides.keys() {
            junction(net, id, "demand override")?;
        }
        let mut demand_var = vec![vec![0.0; net.n_j()]; t];
        for (k, row) in demand_var.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let id = &net.junctions[j].id;
                let disp = self.demand.overrides.get(id).unwrap_or(&self.demand.dispersion);
                *v = disp.resolve(demand_means.means[j][k], z, &format!("demand '{id}'"))?;
            }
        }

        for id in self.roughness.overrides.keys() {
            if !matches!(net.find_link(id), Some(l) if l.kind == LinkKind::Pipe) {
                return Err(Error::Scenario(format!("roughness override: no pipe '{id}'")));
            }
        }
        if !self.roughness.means.is_empty() {
            return Err(Error::Scenario("roughness does not take per-step means".into()));
        }
        let roughness_means: Vec<f64> = net.pipes.iter().map(|p| p.roughness).collect();
        let roughness_var = net
            .pipes
            .iter()
            .map(|p| {
                let disp = self
                    .roughness
                    .overrides
                    .get(&p.id)
                    .unwrap_or(&self.roughness.dispersion);
                disp.resolve(p.roughness, z, &format!("roughness '{}'", p.id))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut explicit: BTreeMap<usize, Measurement> = BTreeMap::new();
        let mut extras = Vec::new();
        for m in &self.measurements {
            let state = net.find_state(&m.id, m.kind).ok_or_else(|| {
                Error::Scenario(format!(
                    "measured {} '{}' is not in the network",
                    m.kind.as_str(),
                    m.id
                ))
            })?;
            let reference = match state {
                StateRef::Head(_) => self.noise_reference_ft,
                StateRef::Flow(_) => m.value.unwrap_or(0.0),
            };
            let variance = m
                .dispersion
                .resolve(reference, z, &format!("measurement '{}'", m.id))?;
            if let Some(v) = m.value {
                if !v.is_finite() {
                    return Err(Error::Scenario(format!("non-finite value for '{}'", m.id)));
                }
            }
            let meas = Measurement {
                state,
                label: format!("{}", net.state_labels()[net.state_index(state)]),
                variance,
                family: m.family,
                value: m.value,
            };
            let idx = net.state_index(state);
            if meas.is_fixed_head() {
                if explicit.insert(idx, meas).is_some() {
                    return Err(Error::Scenario(format!("'{}' measured twice", m.id)));
                }
            } else {
                if extras.iter().any(|e: &Measurement| e.state == state) {
                    return Err(Error::Scenario(format!("'{}' measured twice", m.id)));
                }
                extras.push(meas);
            }
        }
        let labels = net.state_labels();
        let mut measurements = Vec::new();
        for i in net.n_j()..net.n_h() {
            let m = explicit.remove(&i).unwrap_or_else(|| Measurement {
                state: net.state_at(i),
                label: labels[i].to_string(),
                variance: 0.0,
                family: Family::Normal,
                value: None,
            });
            measurements.push(m);
        }
        measurements.extend(extras);

        let mut weights = RowWeights {
            mass: self.weights.mass,
            energy: self.weights.energy,
            valve: self.weights.valve,
            measurement: self.weights.measurement,
            overrides: BTreeMap::new(),
        };
        for r in &self.weights.rows {
            let ok = match r.class {
                RowClass::Mass => net.find_node(&r.id).is_some_and(|n| n.kind == NodeKind::Junction),
                RowClass::Energy => net
                    .find_link(&r.id)
                    .is_some_and(|l| l.kind != LinkKind::Valve),
                RowClass::Valve => net.find_link(&r.id).is_some_and(|l| l.kind == LinkKind::Valve),
                RowClass::Measurement => measurements.iter().any(|m| {
                    m.label == r.id
                        || match m.state {
                            StateRef::Head(n) => net.node_id(n) == r.id,
                            StateRef::Flow(l) => net.link_id(l) == r.id,
                        }
                }),
            };
            if !ok {
                return Err(Error::Scenario(format!(
                    "weight row {:?} '{}' does not match any row",
                    r.class, r.id
                )));
            }
            weights.overrides.insert((r.class, r.id.clone()), r.weight);
        }
        for w in [weights.mass, weights.energy, weights.valve, weights.measurement]
            .into_iter()
            .chain(weights.overrides.values().copied())
        {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Scenario(format!("weights must be positive, got {w}")));
            }
        }

        let valve_schedule = match &self.valve_schedule {
            Some(entries) => {
                let s = ValveSchedule {
                    entries: entries.clone(),
                };
                s.validate(net)?;
                Some(s)
            }
            None => None,
        };

        Ok(Scenario {
            name: self.name.clone(),
            horizon: t,
            dt,
            confidence: self.confidence,
            demand_family: self.demand.family,
            roughness_family: self.roughness.family,
            demand_means,
            demand_var,
            roughness_means,
            roughness_var,
            measurements,
            weights,
            valve_schedule,
        })
    }
}

fn junction(net: &Network, id: &str, what: &str) -> Result<usize> {
    match net.find_node(id) {
        Some(n) if n.kind == NodeKind::Junction => Ok(n.index),
        _ => Err(Error::Scenario(format!("{what}: no junction '{id}'"))),
    }
}

/// Parse a scenario file and resolve it against `net`.
pub fn load_scenario(text: &str, net: &Network) -> Result<Scenario> {
    ScenarioConfig::from_json(text)?.resolve(net)
}
