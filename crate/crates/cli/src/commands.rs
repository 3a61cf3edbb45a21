use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde_json::json;
use wdn_pse::generate::{grid_network, GridOptions};
use wdn_pse::hydraulics::{
    pipe_resistance_gpm, pump_headgain, run_eps, EpsOptions, EpsStep, SolverOptions, ValveSchedule,
};
use wdn_pse::inp::{parse_inp_bytes, write_inp, Severity};
use wdn_pse::lab::{
    compare, draw, pipe_headloss_pdf, pump_headgain_pdf, run_mcs, sample_rng,
    source_impact_sweep, FlowPdf, Histogram, McsOptions, SweepGrid, SweepMode,
};
use wdn_pse::linearization::rank_check;
use wdn_pse::network::{validate_topology, LinkKind, Network, StateKind, StateLabel, HW_EXPONENT};
use wdn_pse::pse::{nominal_step, run_algorithm1, PseOptions};
use wdn_pse::report;
use wdn_pse::scenario::{Family, Scenario, ScenarioConfig, WeightConfig};

use crate::rundir::RunDir;
use crate::{Command, CouplingArg, DensityKind, ModeArg};

/// An error with a fixed exit code that did not come from the library.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

fn fail(code: u8, message: impl Into<String>) -> anyhow::Error {
    Failure {
        code,
        message: message.into(),
    }
    .into()
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate { inp } => validate(&inp),
        Command::Solve {
            inp,
            scenario,
            step,
            out,
        } => solve(&inp, scenario.as_deref(), step, &out.out),
        Command::Eps {
            inp,
            scenario,
            schedule,
            steps,
            out,
        } => eps(&inp, scenario.as_deref(), schedule.as_deref(), steps, &out.out),
        Command::Pse {
            inp,
            scenario,
            horizon,
            coupled,
            tank_coupling,
            weights,
            dump_cov,
            svg,
            out,
        } => pse(PseArgs {
            inp,
            scenario,
            horizon,
            coupled,
            tank_coupling,
            weights,
            dump_cov,
            svg,
            out: out.out,
        }),
        Command::Mcs {
            inp,
            scenario,
            samples,
            seed,
            step,
            compare,
            out,
        } => mcs(&inp, &scenario, samples, seed, step, compare.as_deref(), &out.out),
        Command::Sweep {
            inp,
            scenario,
            grid,
            mode,
            step,
            out,
        } => sweep(&inp, &scenario, grid.as_deref(), mode, step, &out.out),
        Command::Density {
            inp,
            link,
            kind,
            mean,
            sd,
            samples,
            seed,
            bins,
            out,
        } => density(&inp, &link, kind, mean, sd, samples, seed, bins, &out.out),
        Command::Generate {
            rows,
            cols,
            seed,
            out,
        } => generate(rows, cols, seed, &out),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?)
        .map_err(|_| fail(2, format!("{} is not valid UTF-8", path.display())))
}

fn load_network(path: &Path, run: Option<&mut RunDir>) -> Result<Network> {
    let bytes = read(path)?;
    if let Some(r) = run {
        r.input(path, &bytes);
    }
    let parsed = parse_inp_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    for d in &parsed.diagnostics {
        warn!("{}:{} [{}] {}", path.display(), d.line, d.section, d.message);
    }
    Ok(parsed.network)
}

fn load_config(path: &Path, run: &mut RunDir) -> Result<ScenarioConfig> {
    let text = read_text(path)?;
    run.input(path, text.as_bytes());
    run.scenario(text.as_bytes());
    Ok(ScenarioConfig::from_json(&text).with_context(|| format!("loading {}", path.display()))?)
}

fn rundir(out: &Path, command: &str) -> Result<RunDir> {
    RunDir::create(&out.join(command), command)
}

fn validate(inp: &Path) -> Result<()> {
    let bytes = read(inp)?;
    let parsed = parse_inp_bytes(&bytes).with_context(|| format!("parsing {}", inp.display()))?;
    let net = parsed.network;
    let mut errors = 0;
    for d in &parsed.diagnostics {
        if d.severity == Severity::Error {
            errors += 1;
        }
        println!("{:?} line {} [{}]: {}", d.severity, d.line, d.section, d.message);
    }
    println!(
        "{}: {} junctions, {} reservoirs, {} tanks, {} pipes, {} pumps, {} valves",
        inp.display(),
        net.n_j(),
        net.n_r(),
        net.n_t(),
        net.n_p(),
        net.n_m(),
        net.n_l()
    );
    if errors > 0 {
        return Err(fail(2, format!("{errors} input errors")));
    }
    let topo = validate_topology(&net);
    for f in &topo.findings {
        println!("topology: {f}");
    }
    if !topo.is_clean() {
        return Err(fail(3, "topology check failed"));
    }
    let sc = Scenario::deterministic(&net, 1);
    let opts = PseOptions {
        steps: Some(1),
        ..Default::default()
    };
    let run = run_algorithm1(&net, &sc, &opts)?;
    let s = &run.systems[0];
    let rank = rank_check(&s.a, &s.rows, &net.state_labels());
    println!(
        "rank: structural {}, numeric {}, columns {}",
        rank.structural_rank,
        rank.numeric_rank.map_or("skipped".into(), |r| r.to_string()),
        rank.cols
    );
    if !rank.is_full_rank() {
        return Err(rank.into_error().into());
    }
    println!("ok");
    Ok(())
}

fn states_csv(net: &Network, steps: &[EpsStep]) -> String {
    let labels = net.state_labels();
    let mut out = String::from("step,state_id,kind,value\n");
    for s in steps {
        for (l, v) in labels.iter().zip(&s.solution.state.x) {
            let _ = writeln!(out, "{},{},{},{v}", s.step, l.id, l.kind.as_str());
        }
    }
    out
}

fn report_steps(run: &mut RunDir, net: &Network, steps: &[EpsStep]) -> Result<()> {
    for s in steps {
        for v in &s.solution.violations {
            warn!("step {}: {v}", s.step);
        }
        info!(
            "step {}: {} iterations, residual {:.2e}",
            s.step, s.solution.iterations, s.solution.residual
        );
    }
    run.write("states.csv", &states_csv(net, steps))?;
    let summary: Vec<_> = steps
        .iter()
        .map(|s| {
            json!({
                "step": s.step,
                "iterations": s.solution.iterations,
                "residual": s.solution.residual,
                "violations": s.solution.violations,
                "tank_events": s.tank_events,
            })
        })
        .collect();
    run.write_json("steps.json", &json!({ "steps": summary }))
}

fn eps_options(sc: &Scenario, steps: usize) -> EpsOptions {
    EpsOptions {
        steps,
        dt: Some(sc.dt),
        demands: Some(sc.demand_means.clone()),
        roughness: Some(sc.roughness_means.clone()),
        valve_schedule: sc.valve_schedule.clone(),
        solver: SolverOptions::default(),
        warm_start: true,
    }
}

fn scenario_or_default(
    net: &Network,
    path: Option<&Path>,
    horizon: usize,
    run: &mut RunDir,
) -> Result<Scenario> {
    match path {
        Some(p) => {
            let mut cfg = load_config(p, run)?;
            cfg.horizon = cfg.horizon.max(horizon);
            Ok(cfg.resolve(net)?)
        }
        None => Ok(Scenario::deterministic(net, horizon)),
    }
}

fn solve(inp: &Path, scenario: Option<&Path>, step: usize, out: &Path) -> Result<()> {
    let mut run = rundir(out, "solve")?;
    let net = load_network(inp, Some(&mut run))?;
    let sc = scenario_or_default(&net, scenario, step + 1, &mut run)?;
    let (_, _, s) = nominal_step(&net, &sc, step, &SolverOptions::default())?;
    let steps = [s];
    report_steps(&mut run, &net, &steps)?;
    for (l, v) in net.state_labels().iter().zip(&steps[0].solution.state.x) {
        println!("{l} = {v:.4}");
    }
    run.finish()?;
    Ok(())
}

fn eps(
    inp: &Path,
    scenario: Option<&Path>,
    schedule: Option<&Path>,
    steps: Option<usize>,
    out: &Path,
) -> Result<()> {
    let mut run = rundir(out, "eps")?;
    let net = load_network(inp, Some(&mut run))?;
    let n = match steps {
        Some(n) => n,
        None => ((net.times.duration / net.times.hydraulic_step).floor() as usize + 1).max(1),
    };
    let sc = scenario_or_default(&net, scenario, n, &mut run)?;
    let mut opts = eps_options(&sc, n);
    if let Some(p) = schedule {
        let text = read_text(p)?;
        run.input(p, text.as_bytes());
        opts.valve_schedule = Some(ValveSchedule::from_json(&text)?);
    }
    let result = run_eps(&net, &opts)?;
    report_steps(&mut run, &net, &result)?;
    let events: usize = result.iter().map(|s| s.tank_events.len()).sum();
    println!("{n} steps solved, {events} tank clamp events");
    run.finish()?;
    Ok(())
}

struct PseArgs {
    inp: PathBuf,
    scenario: PathBuf,
    horizon: Option<usize>,
    coupled: bool,
    tank_coupling: CouplingArg,
    weights: Option<PathBuf>,
    dump_cov: bool,
    svg: Vec<String>,
    out: PathBuf,
}

fn pse(a: PseArgs) -> Result<()> {
    let mut run = rundir(&a.out, "pse")?;
    let net = load_network(&a.inp, Some(&mut run))?;
    let mut cfg = load_config(&a.scenario, &mut run)?;
    if let Some(h) = a.horizon {
        cfg.horizon = cfg.horizon.max(h);
    }
    if let Some(p) = &a.weights {
        let text = read_text(p)?;
        run.input(p, text.as_bytes());
        cfg.weights = serde_json::from_str::<WeightConfig>(&text)
            .map_err(|e| fail(2, format!("weights {}: {e}", p.display())))?;
    }
    let sc = cfg.resolve(&net)?;
    let opts = PseOptions {
        steps: a.horizon,
        coupled: a.coupled,
        tank_coupling: match a.tank_coupling {
            CouplingArg::MeasuredEveryStep => Default::default(),
            CouplingArg::AnchoredAtFirstStep => {
                wdn_pse::linearization::TankCoupling::AnchoredAtFirstStep
            }
        },
        ..Default::default()
    };
    let res = run_algorithm1(&net, &sc, &opts)?;
    run.write("variance.csv", &report::variance_csv(&res.results)?)?;
    run.write_json("summary.json", &report::pse_summary(&res.results)?)?;
    if a.dump_cov {
        let mut all = String::new();
        for r in &res.results {
            let t = report::triplets(&r.labels, &r.cov, r.step);
            if all.is_empty() {
                all = t;
            } else {
                all.extend(t.lines().skip(1).map(|l| format!("{l}\n")));
            }
        }
        run.write("covariance.csv", &all)?;
    }
    if let Some(c) = &res.coupled {
        let labels: Vec<StateLabel> = c
            .cols
            .iter()
            .map(|col| StateLabel {
                id: format!("{}@{}", col.state.id, col.step),
                kind: col.state.kind,
            })
            .collect();
        let var: String = labels
            .iter()
            .enumerate()
            .fold(String::from("state,kind,step,mean,variance\n"), |mut s, (i, l)| {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    c.cols[i].state.id,
                    l.kind.as_str(),
                    c.cols[i].step,
                    c.mean[i],
                    c.cov[(i, i)]
                );
                s
            });
        run.write("coupled_variance.csv", &var)?;
        if a.dump_cov {
            run.write("coupled_covariance.csv", &report::triplets(&labels, &c.cov, 0))?;
        }
    }
    for id in &a.svg {
        let r0 = &res.results[0];
        let idx = r0
            .index_of(id, StateKind::Head)
            .or_else(|| r0.index_of(id, StateKind::Flow))
            .ok_or_else(|| fail(2, format!("--svg: no state named '{id}'")))?;
        let series = report::BandSeries::from_results(&res.results, idx)?;
        run.write(&format!("band_{id}.svg"), &report::band_svg(&series))?;
    }
    for r in &res.results {
        let s = r.sigma();
        let (imax, smax) = s
            .iter()
            .enumerate()
            .fold((0, 0.0), |m, (i, v)| if *v > m.1 { (i, *v) } else { m });
        let mean = s.iter().sum::<f64>() / s.len().max(1) as f64;
        println!(
            "step {}: mean sigma {mean:.4}, max sigma {smax:.4} ({}){}",
            r.step,
            r.labels[imax],
            r.reconstruction
                .map_or(String::new(), |e| format!(", reconstruction {e:.1e}"))
        );
    }
    let dir = run.finish()?;
    println!("outputs in {}", dir.display());
    Ok(())
}

fn read_pse_sigma(path: &Path, step: usize) -> Result<HashMap<(String, String), f64>> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| fail(2, format!("{}: missing column '{name}'", path.display())))
    };
    let (ci, ck, cs, cst) = (col("state_id")?, col("kind")?, col("sigma")?, col("step")?);
    let mut out = HashMap::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || fail(2, format!("{}: malformed row {}", path.display(), n + 2));
        if f.len() < header.len() {
            return Err(bad());
        }
        let s: usize = f[cst].parse().map_err(|_| bad())?;
        if s != step {
            continue;
        }
        let sigma: f64 = f[cs].parse().map_err(|_| bad())?;
        out.insert((f[ci].to_string(), f[ck].to_string()), sigma);
    }
    Ok(out)
}

fn mcs(
    inp: &Path,
    scenario: &Path,
    samples: usize,
    seed: u64,
    step: usize,
    compare_with: Option<&Path>,
    out: &Path,
) -> Result<()> {
    if samples < 2 {
        bail!(fail(2, "--samples must be at least 2"));
    }
    let mut run = rundir(out, "mcs")?;
    let net = load_network(inp, Some(&mut run))?;
    let text = read_text(scenario)?;
    run.input(scenario, text.as_bytes());
    let hash = run.scenario(text.as_bytes());
    run.seed(seed);
    let sc = ScenarioConfig::from_json(&text)?.resolve(&net)?;
    let batch = run_mcs(
        &net,
        &sc,
        &McsOptions {
            samples,
            seed,
            step,
            ..Default::default()
        },
    )?;
    run.write("mcs_sigma.csv", &report::mcs_sigma_csv(&batch)?)?;
    run.write_json("batch_manifest.json", &report::batch_manifest(&batch, &hash))?;
    println!(
        "{} of {} samples converged at step {step}",
        batch.converged(),
        batch.requested
    );
    if let Some(p) = compare_with {
        run.input(p, &read(p)?);
        let table = read_pse_sigma(p, step)?;
        let sigma_pse = batch
            .labels
            .iter()
            .map(|l| {
                table
                    .get(&(l.id.clone(), l.kind.as_str().to_string()))
                    .copied()
                    .ok_or_else(|| fail(2, format!("{}: no row for {l} at step {step}", p.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        let rep = compare(&batch.labels, &sigma_pse, &batch.sigma()?)?;
        run.write("metrics.csv", &report::metrics_csv(&rep))?;
        println!(
            "AE mean {:.4} max {:.4}; RE mean {:.3}% max {:.3}%",
            rep.mean_ae, rep.max_ae, rep.mean_re, rep.max_re
        );
    }
    let dir = run.finish()?;
    println!("outputs in {}", dir.display());
    Ok(())
}

fn sweep(
    inp: &Path,
    scenario: &Path,
    grid: Option<&Path>,
    mode: Option<ModeArg>,
    step: Option<usize>,
    out: &Path,
) -> Result<()> {
    let mut run = rundir(out, "sweep")?;
    let net = load_network(inp, Some(&mut run))?;
    let base = load_config(scenario, &mut run)?;
    let mut g = match grid {
        Some(p) => {
            let text = read_text(p)?;
            run.input(p, text.as_bytes());
            serde_json::from_str::<SweepGrid>(&text)
                .map_err(|e| fail(2, format!("grid {}: {e}", p.display())))?
        }
        None => SweepGrid::default(),
    };
    if let Some(m) = mode {
        g.mode = match m {
            ModeArg::Protocol => SweepMode::Protocol,
            ModeArg::Isolated => SweepMode::Isolated,
        };
    }
    if let Some(k) = step {
        g.step = k;
    }
    let table = source_impact_sweep(&net, &base, &g, &PseOptions::default())?;
    run.write("sweep.csv", &report::sweep_csv(&table))?;
    for p in &table.points {
        println!(
            "{:<9} {:>6.2}%  mean sigma {:.4}",
            p.source.as_str(),
            p.me_percent,
            p.mean_sigma()
        );
    }
    run.finish()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn density(
    inp: &Path,
    link: &str,
    kind: DensityKind,
    mean: Option<f64>,
    sd: f64,
    samples: usize,
    seed: u64,
    bins: usize,
    out: &Path,
) -> Result<()> {
    if !(sd > 0.0) || samples < 2 || bins == 0 {
        bail!(fail(2, "--sd must be positive, --samples at least 2, --bins at least 1"));
    }
    let mut run = rundir(out, "density")?;
    let net = load_network(inp, Some(&mut run))?;
    run.seed(seed);
    let l = net
        .find_link(link)
        .ok_or_else(|| fail(2, format!("no link named '{link}'")))?;
    let mean = match mean {
        Some(m) => m,
        None => {
            let sc = Scenario::deterministic(&net, 1);
            let (_, _, s) = nominal_step(&net, &sc, 0, &SolverOptions::default())?;
            s.solution.state.x[net.flow_index(l)]
        }
    };
    let flow = FlowPdf { mean, sd };
    let q: Vec<f64> = (0..samples as u64)
        .map(|i| draw(Family::Normal, mean, sd * sd, &mut sample_rng(seed, i, 0)))
        .collect();
    let (dh, pdf): (Vec<f64>, Box<dyn Fn(f64) -> f64>) = match (kind, l.kind) {
        (DensityKind::Pipe, LinkKind::Pipe) => {
            let p = &net.pipes[l.index];
            let r = pipe_resistance_gpm(p, p.roughness);
            let dh = q
                .iter()
                .map(|q| r * q.abs().powf(HW_EXPONENT) * q.signum())
                .collect();
            (dh, Box::new(move |x| pipe_headloss_pdf(r, HW_EXPONENT, &flow, x)))
        }
        (DensityKind::Pump, LinkKind::Pump) => {
            let curve = net.pumps[l.index].curve;
            let dh = q
                .iter()
                .map(|q| pump_headgain(&curve, *q))
                .collect::<wdn_pse::Result<Vec<f64>>>()?;
            (dh, Box::new(move |x| pump_headgain_pdf(&curve, &flow, x)))
        }
        _ => bail!(fail(2, format!("link '{link}' is not a {kind:?}").to_lowercase())),
    };
    let mut sorted = dh.clone();
    sorted.sort_by(f64::total_cmp);
    let lo = sorted[samples / 200];
    let hi = sorted[samples - 1 - samples / 200];
    let h = Histogram::new(&dh, lo, hi.max(lo + f64::EPSILON), bins);
    run.write("histogram.csv", &report::histogram_csv(&h, &pdf))?;
    println!(
        "{link}: flow N({mean:.3}, {sd:.3}^2), sup |empirical - analytic| = {:.5}",
        h.sup_distance(&pdf)
    );
    run.finish()?;
    Ok(())
}

fn generate(rows: usize, cols: usize, seed: u64, out: &Path) -> Result<()> {
    if rows < 2 || cols < 2 {
        bail!(fail(2, "--rows and --cols must be at least 2"));
    }
    let net = grid_network(&GridOptions {
        rows,
        cols,
        seed,
        ..Default::default()
    });
    fs::write(out, write_inp(&net)).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{}: {} junctions, {} links",
        out.display(),
        net.n_j(),
        net.n_p() + net.n_m() + net.n_l()
    );
    Ok(())
}
