use std::time::{Duration, Instant};

use wdn_pse::bundled;
use wdn_pse::generate::{grid_network, GridOptions};
use wdn_pse::lab::{
    compare, ks_normality_test, pipe_headloss_pdf, run_mcs, sample_linearized, sample_rng, draw,
    source_impact_sweep, FlowPdf, Histogram, McsOptions, SweepGrid, SweepMode, SweepSource,
};
use wdn_pse::linearization::rank_check;
use wdn_pse::network::{
    validate_topology, Network, StateKind, Valve, ValveKind, ValveStatus, HW_EXPONENT,
};
use wdn_pse::pse::{run_algorithm1, PseOptions};
use wdn_pse::scenario::{
    load_scenario, Dispersion, Family, MeasurementConfig, Scenario, ScenarioConfig,
};

const SEED: u64 = 2019;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(v: f64, target: f64, rel: f64) -> bool {
    (v - target).abs() <= rel * target.abs()
}

fn three_node() -> (Network, Scenario) {
    let net = bundled::three_node();
    let sc = load_scenario(bundled::THREE_NODE_SCENARIO_JSON, &net).unwrap();
    (net, sc)
}

fn eight_node(family: Family) -> (Network, Scenario) {
    let net = bundled::eight_node();
    let mut cfg = ScenarioConfig::from_json(bundled::EIGHT_NODE_SCENARIO_JSON).unwrap();
    cfg.demand.family = family;
    let sc = cfg.resolve(&net).unwrap();
    (net, sc)
}

fn step0() -> PseOptions {
    PseOptions {
        steps: Some(1),
        ..Default::default()
    }
}

fn var(r: &wdn_pse::pse::CovarianceResult, id: &str, kind: StateKind) -> f64 {
    r.variance_of(id, kind).unwrap()
}

/// PSE against MCS at step 0; RE statistics over states with nonzero MCS sigma.
fn pse_vs_mcs(net: &Network, sc: &Scenario, samples: usize) -> (f64, f64, usize, Duration) {
    let t = Instant::now();
    let run = run_algorithm1(net, sc, &step0()).unwrap();
    let batch = run_mcs(
        net,
        sc,
        &McsOptions {
            samples,
            seed: SEED,
            ..Default::default()
        },
    )
    .unwrap();
    let rep = compare(&batch.labels, &run.results[0].sigma(), &batch.sigma().unwrap()).unwrap();
    let n = rep.rows.iter().filter(|r| r.re.is_some()).count();
    (rep.mean_re, rep.max_re, n, t.elapsed())
}

fn c1() -> Outcome {
    let (net, sc) = three_node();
    let t = Instant::now();
    let run = run_algorithm1(&net, &sc, &PseOptions::default()).unwrap();
    let dt = t.elapsed();
    let r = &run.results[0];
    let q12 = var(r, "PU12", StateKind::Flow);
    let q23 = var(r, "P23", StateKind::Flow);
    let h2 = var(r, "J2", StateKind::Head);
    let ok = within(q12, 0.16, 0.15)
        && within(q23, 55.44, 0.15)
        && within(h2, 0.60, 0.15)
        && dt < Duration::from_secs(1);
    outcome(
        ok,
        format!("Var(q12)={q12:.3} Var(q23)={q23:.2} Var(h2)={h2:.3} in {dt:.2?}"),
    )
}

fn c2() -> Outcome {
    let (net, sc) = three_node();
    let t = Instant::now();
    let run = run_algorithm1(&net, &sc, &PseOptions::default()).unwrap();
    let batch = run_mcs(
        &net,
        &sc,
        &McsOptions {
            samples: 1000,
            seed: SEED,
            ..Default::default()
        },
    )
    .unwrap();
    let rep = compare(&batch.labels, &run.results[0].sigma(), &batch.sigma().unwrap()).unwrap();
    let dt = t.elapsed();
    let worst = rep
        .rows
        .iter()
        .filter_map(|r| r.re.map(|e| (e, r.state.clone())))
        .fold((0.0, String::new()), |a, b| if b.0 > a.0 { b } else { a });
    outcome(
        worst.0 <= 5.0 && dt < Duration::from_secs(30),
        format!("max RE {:.2}% ({}) over {} states in {dt:.2?}", worst.0, worst.1, rep.rows.iter().filter(|r| r.re.is_some()).count()),
    )
}

fn c3() -> Outcome {
    let (net, sc) = eight_node(Family::Normal);
    let (mean, max, n, dt) = pse_vs_mcs(&net, &sc, 1000);
    outcome(
        mean <= 5.0 && n == 16 && dt < Duration::from_secs(60),
        format!("mean RE {mean:.3}% max RE {max:.3}% over {n} states in {dt:.2?}"),
    )
}

fn c4() -> Outcome {
    let net = bundled::three_node();
    let base = ScenarioConfig::from_json(bundled::THREE_NODE_OVERDETERMINED_JSON).unwrap();
    let weights = [10.0, 3.0, 1.0, 0.3, 0.1, 0.03, 0.01, 1e-3, 1e-4, 1e-5, 1e-6];
    let mut sig = Vec::new();
    for w in weights {
        let mut cfg = base.clone();
        cfg.weights.mass = w;
        let sc = cfg.resolve(&net).unwrap();
        let run = run_algorithm1(&net, &sc, &PseOptions::default()).unwrap();
        sig.push(var(&run.results[0], "P23", StateKind::Flow).sqrt());
    }
    let monotone = sig.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    let last = *sig.last().unwrap();
    outcome(
        monotone && within(last, 3.39, 0.15),
        format!(
            "sigma(q23) {:.3} -> {:.3} over mass weight 10 -> 1e-6, monotone={monotone}",
            sig[0], last
        ),
    )
}

fn c5() -> Outcome {
    let cases = [
        (bundled::three_node(), bundled::THREE_NODE_SCENARIO_JSON),
        (bundled::eight_node(), bundled::EIGHT_NODE_SCENARIO_JSON),
        (bundled::eight_node_valves(), bundled::EIGHT_NODE_VALVES_SCENARIO_JSON),
    ];
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for (net, text) in cases {
        let sc = load_scenario(text, &net).unwrap();
        let run = run_algorithm1(&net, &sc, &PseOptions::default()).unwrap();
        for r in &run.results {
            worst = worst.max(r.reconstruction.unwrap());
            n += 1;
        }
    }
    outcome(worst < 1e-10, format!("max relative residual {worst:.2e} over {n} step systems"))
}

fn c6() -> Outcome {
    let mut nets = bundled::all();
    nets.push(("generated", grid_network(&GridOptions::default())));
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, net) in &nets {
        let sc = Scenario::deterministic(net, 1);
        let run = run_algorithm1(net, &sc, &step0()).unwrap();
        let s = &run.systems[0];
        let rep = rank_check(&s.a, &s.rows, &net.state_labels());
        ok &= rep.full_column_rank;
        notes.push(format!("{name}:{}/{}", rep.numeric_rank.unwrap_or(rep.structural_rank), rep.cols));
    }
    let mut broken = bundled::eight_node_valves();
    let v = broken.valves[0].clone();
    broken.valves[0].status = ValveStatus::Open;
    broken.valves.push(Valve {
        id: "V_PAR".into(),
        status: ValveStatus::Open,
        ..v
    });
    let topo = validate_topology(&broken);
    let detected = !topo.is_clean();
    ok &= detected;
    notes.push(format!("parallel open valves detected={detected}"));
    outcome(ok, notes.join(" "))
}

fn c7() -> Outcome {
    let net = bundled::eight_node_valves();
    let sc = load_scenario(bundled::EIGHT_NODE_VALVES_SCENARIO_JSON, &net).unwrap();
    let run = run_algorithm1(&net, &sc, &PseOptions::default()).unwrap();
    let (mut fcv, mut prv, mut open) = (0, 0, 0);
    let mut ok = true;
    for (k, r) in run.results.iter().enumerate() {
        let cond = &run.eps[k].conditions;
        for (i, v) in net.valves.iter().enumerate() {
            let ctl = cond.valves[i];
            let fi = net.state_index(wdn_pse::network::StateRef::Head(v.from));
            let ti = net.state_index(wdn_pse::network::StateRef::Head(v.to));
            let scale = r.cov.diagonal().max().max(1.0);
            match (ctl.status, v.kind) {
                (ValveStatus::Active, ValveKind::Fcv) => {
                    let q = r.index_of(&v.id, StateKind::Flow).unwrap();
                    ok &= r.cov[(q, q)].abs() <= 1e-12 * scale && (r.mean[q] - 500.0).abs() < 1e-9;
                    fcv += 1;
                }
                (ValveStatus::Active, ValveKind::Prv) => {
                    ok &= r.cov[(ti, ti)].abs() <= 1e-12 * scale && (r.mean[ti] - 815.0).abs() < 1e-9;
                    prv += 1;
                }
                (ValveStatus::Open, _) => {
                    let d = r.cov[(fi, fi)] + r.cov[(ti, ti)] - 2.0 * r.cov[(fi, ti)];
                    ok &= d.abs() <= 1e-10 * scale;
                    open += 1;
                }
            }
        }
    }
    outcome(
        ok && fcv > 0 && prv > 0 && open > 0,
        format!("{fcv} FCV-active, {prv} PRV-active, {open} open valve-steps checked"),
    )
}

fn c8() -> Outcome {
    let (net, sc) = eight_node(Family::Normal);
    let run = run_algorithm1(&net, &sc, &step0()).unwrap();
    let xs = sample_linearized(&run.systems[0], &sc, 1000, SEED).unwrap();
    let mut tested = 0;
    let mut failed = Vec::new();
    for (i, l) in net.state_labels().iter().enumerate() {
        if run.results[0].cov[(i, i)] <= 0.0 {
            continue;
        }
        let col: Vec<f64> = xs.iter().map(|x| x[i]).collect();
        let r = ks_normality_test(&col, 0.01).unwrap();
        tested += 1;
        if !r.pass {
            failed.push(l.to_string());
        }
    }
    // nonlinear head loss of a normally distributed pipe flow
    let f = FlowPdf { mean: 100.0, sd: 25.0 };
    let r = 0.002;
    let dh: Vec<f64> = (0..100_000u64)
        .map(|i| draw(Family::Normal, f.mean, f.sd * f.sd, &mut sample_rng(SEED, i, 0)))
        .map(|q| r * q.abs().powf(HW_EXPONENT) * q.signum())
        .collect();
    let h = Histogram::new(&dh, 0.0, 60.0, 60);
    let sup = h.sup_distance(|x| pipe_headloss_pdf(r, HW_EXPONENT, &f, x));
    let ks = ks_normality_test(&dh, 0.01).unwrap();
    outcome(
        failed.is_empty() && tested > 0 && sup < 0.02 && !ks.pass,
        format!(
            "linearized: {}/{tested} marginals pass KS; head-loss density sup-norm {sup:.4}, KS D={:.4} vs crit {:.4} (normality rejected={})",
            tested - failed.len(),
            ks.statistic,
            ks.critical,
            !ks.pass
        ),
    )
}

fn c9() -> Outcome {
    let net = bundled::eight_node();
    let base = ScenarioConfig::from_json(bundled::EIGHT_NODE_SCENARIO_JSON).unwrap();
    let grid = SweepGrid {
        demand: vec![30.0],
        roughness: vec![30.0],
        noise: vec![5.0],
        mode: SweepMode::Isolated,
        step: 0,
    };
    let t = source_impact_sweep(&net, &base, &grid, &PseOptions::default()).unwrap();
    let c = t.point(SweepSource::Roughness, 30.0).unwrap().mean_sigma();
    let d = t.point(SweepSource::Demand, 30.0).unwrap().mean_sigma();
    let v = t.point(SweepSource::Noise, 5.0).unwrap().mean_sigma();
    outcome(
        c > d && d > v,
        format!("mean sigma c30={c:.3} d30={d:.3} v5={v:.3}"),
    )
}

fn generated_scenario(net: &Network) -> Scenario {
    let cfg = ScenarioConfig {
        name: "generated".into(),
        horizon: 1,
        demand: wdn_pse::scenario::SourceConfig {
            dispersion: Dispersion::me(20.0),
            ..Default::default()
        },
        roughness: wdn_pse::scenario::SourceConfig {
            dispersion: Dispersion::me(20.0),
            ..Default::default()
        },
        measurements: vec![MeasurementConfig {
            id: "T1".into(),
            kind: StateKind::Head,
            dispersion: Dispersion::me(1.0),
            value: None,
            family: Family::Normal,
        }],
        ..Default::default()
    };
    cfg.resolve(net).unwrap()
}

fn c10() -> Outcome {
    let net = grid_network(&GridOptions::default());
    let sc = generated_scenario(&net);
    let comps = net.n_h() + net.n_q();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (pse_t, mcs_t) = pool.install(|| {
        let t = Instant::now();
        let run = run_algorithm1(&net, &sc, &step0()).unwrap();
        let pse_t = t.elapsed();
        assert!(run.results[0].reconstruction.unwrap() < 1e-8);
        let t = Instant::now();
        run_mcs(
            &net,
            &sc,
            &McsOptions {
                samples: 1000,
                seed: SEED,
                ..Default::default()
            },
        )
        .unwrap();
        (pse_t, t.elapsed())
    });
    let ratio = mcs_t.as_secs_f64() / pse_t.as_secs_f64();
    outcome(
        pse_t < Duration::from_secs(1) && ratio >= 10.0,
        format!("{comps} components: PSE {pse_t:.2?}, MCS(1000) {mcs_t:.2?}, ratio {ratio:.1}x (single thread)"),
    )
}

fn c11() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for fam in [Family::Uniform, Family::Laplace] {
        let (net, sc) = eight_node(fam);
        let (mean, max, _, _) = pse_vs_mcs(&net, &sc, 1000);
        ok &= mean <= 5.0;
        notes.push(format!("{fam:?}: mean RE {mean:.3}% max {max:.3}%"));
    }
    outcome(ok, notes.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("1 three-node PSE variances", c1),
        ("2 three-node PSE vs MCS", c2),
        ("3 8-node PSE vs MCS", c3),
        ("4 over-determined weight sweep", c4),
        ("5 reconstruction identity", c5),
        ("6 rank and topology", c6),
        ("7 valve semantics", c7),
        ("8 distribution propagation", c8),
        ("9 source ordering", c9),
        ("10 scalability", c10),
        ("11 distribution-mix robustness", c11),
    ];
    let mut failures = 0;
    for (name, f) in criteria {
        let o = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !o.pass {
            failures += 1;
        }
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of 11 criteria passed", 11 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
