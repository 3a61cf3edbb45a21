use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Network, StateKind, StateLabel};
use crate::pse::{run_algorithm1, PseOptions};
use crate::scenario::{Dispersion, Family, MeasurementConfig, ScenarioConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepSource {
    Demand,
    Roughness,
    Noise,
}

impl SweepSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepSource::Demand => "demand",
            SweepSource::Roughness => "roughness",
            SweepSource::Noise => "noise",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Other sources held at the middle value of their grid.
    #[default]
    Protocol,
    /// Other sources switched off.
    Isolated,
}

/// Margins of error (percent) per source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub demand: Vec<f64>,
    pub roughness: Vec<f64>,
    pub noise: Vec<f64>,
    pub mode: SweepMode,
    pub step: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            demand: vec![0.0, 15.0, 30.0],
            roughness: vec![0.0, 15.0, 30.0],
            noise: vec![0.0, 2.5, 5.0],
            mode: SweepMode::Protocol,
            step: 0,
        }
    }
}

impl SweepGrid {
    fn values(&self, s: SweepSource) -> &[f64] {
        match s {
            SweepSource::Demand => &self.demand,
            SweepSource::Roughness => &self.roughness,
            SweepSource::Noise => &self.noise,
        }
    }

    fn held(&self, s: SweepSource) -> f64 {
        match self.mode {
            SweepMode::Isolated => 0.0,
            SweepMode::Protocol => {
                let v = self.values(s);
                if v.is_empty() {
                    0.0
                } else {
                    v[v.len() / 2]
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub source: SweepSource,
    pub me_percent: f64,
    pub sigma: Vec<f64>,
}

impl SweepPoint {
    pub fn mean_sigma(&self) -> f64 {
        if self.sigma.is_empty() {
            0.0
        } else {
            self.sigma.iter().sum::<f64>() / self.sigma.len() as f64
        }
    }

    /// Mean sigma over states of one kind.
    pub fn mean_sigma_of(&self, labels: &[StateLabel], kind: StateKind) -> f64 {
        let v: Vec<f64> = labels
            .iter()
            .zip(&self.sigma)
            .filter(|(l, _)| l.kind == kind)
            .map(|(_, s)| *s)
            .collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTable {
    pub step: usize,
    pub labels: Vec<StateLabel>,
    pub points: Vec<SweepPoint>,
}

impl SweepTable {
    pub fn point(&self, source: SweepSource, me: f64) -> Option<&SweepPoint> {
        self.points
            .iter()
            .find(|p| p.source == source && p.me_percent == me)
    }
}

/// `base` with demand, roughness and measurement spreads replaced. Every
/// reservoir and tank gets a measurement entry so noise reaches fixed heads.
pub fn with_margins(net: &Network, base: &ScenarioConfig, d: f64, c: f64, v: f64) -> ScenarioConfig {
    let mut cfg = base.clone();
    cfg.demand.dispersion = Dispersion::me(d);
    cfg.demand.overrides.clear();
    cfg.roughness.dispersion = Dispersion::me(c);
    cfg.roughness.overrides.clear();
    let fixed = net
        .reservoirs
        .iter()
        .map(|r| &r.id)
        .chain(net.tanks.iter().map(|t| &t.id));
    for id in fixed {
        if !cfg
            .measurements
            .iter()
            .any(|m| &m.id == id && m.kind == StateKind::Head)
        {
            cfg.measurements.push(MeasurementConfig {
                id: id.clone(),
                kind: StateKind::Head,
                dispersion: Dispersion::default(),
                value: None,
                family: Family::Normal,
            });
        }
    }
    for m in &mut cfg.measurements {
        m.dispersion = Dispersion::me(v);
    }
    cfg
}

/// Per-state sigma while one source's margin varies over its grid.
pub fn source_impact_sweep(
    net: &Network,
    base: &ScenarioConfig,
    grid: &SweepGrid,
    opts: &PseOptions,
) -> Result<SweepTable> {
    if grid.step >= base.horizon {
        return Err(Error::Scenario(format!(
            "sweep step {} is beyond the scenario horizon of {}",
            grid.step, base.horizon
        )));
    }
    let mut points = Vec::new();
    for source in [SweepSource::Demand, SweepSource::Roughness, SweepSource::Noise] {
        for &me in grid.values(source) {
            let pick = |s: SweepSource| if s == source { me } else { grid.held(s) };
            let cfg = with_margins(
                net,
                base,
                pick(SweepSource::Demand),
                pick(SweepSource::Roughness),
                pick(SweepSource::Noise),
            );
            let sc = cfg.resolve(net)?;
            let run = run_algorithm1(
                net,
                &sc,
                &PseOptions {
                    steps: Some(grid.step + 1),
                    coupled: false,
                    ..opts.clone()
                },
            )?;
            let r = run.results.last().expect("at least one step");
            points.push(SweepPoint {
                source,
                me_percent: me,
                sigma: r.sigma(),
            });
        }
    }
    Ok(SweepTable {
        step: grid.step,
        labels: net.state_labels(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    fn base() -> ScenarioConfig {
        ScenarioConfig::from_json(bundled::EIGHT_NODE_SCENARIO_JSON).unwrap()
    }

    #[test]
    fn all_zero_gives_zero_sigma() {
        let net = bundled::eight_node();
        let grid = SweepGrid {
            demand: vec![0.0],
            roughness: vec![0.0],
            noise: vec![0.0],
            mode: SweepMode::Isolated,
            step: 0,
        };
        let t = source_impact_sweep(&net, &base(), &grid, &PseOptions::default()).unwrap();
        assert_eq!(t.points.len(), 3);
        assert!(t.points.iter().all(|p| p.sigma.iter().all(|s| *s == 0.0)));
    }

    #[test]
    fn sigma_grows_with_margin() {
        let net = bundled::eight_node();
        let t = source_impact_sweep(&net, &base(), &SweepGrid::default(), &PseOptions::default())
            .unwrap();
        for s in [SweepSource::Demand, SweepSource::Roughness, SweepSource::Noise] {
            let a = t.point(s, SweepGrid::default().values(s)[0]).unwrap().mean_sigma();
            let b = t.point(s, *SweepGrid::default().values(s).last().unwrap()).unwrap().mean_sigma();
            assert!(b > a, "{s:?}: {a} !< {b}");
        }
    }

    #[test]
    fn single_point_matches_direct_run() {
        let net = bundled::eight_node();
        let grid = SweepGrid {
            demand: vec![20.0],
            roughness: vec![20.0],
            noise: vec![1.0],
            mode: SweepMode::Protocol,
            step: 0,
        };
        let t = source_impact_sweep(&net, &base(), &grid, &PseOptions::default()).unwrap();
        let sc = with_margins(&net, &base(), 20.0, 20.0, 1.0).resolve(&net).unwrap();
        let run = run_algorithm1(
            &net,
            &sc,
            &PseOptions {
                steps: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        for p in &t.points {
            assert_eq!(p.sigma, run.results[0].sigma());
        }
    }
}
