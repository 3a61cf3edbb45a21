use wdn_pse::bundled;
use wdn_pse::hydraulics::{run_eps, EpsOptions};
use wdn_pse::inp::{parse_inp, write_inp};
use wdn_pse::linearization::TankCoupling;
use wdn_pse::network::{StateKind, StateRef};
use wdn_pse::pse::{run_algorithm1, PseOptions};
use wdn_pse::scenario::{load_scenario, Scenario, ScenarioConfig};

#[test]
fn written_inp_solves_to_the_same_eps() {
    for (name, net) in bundled::all() {
        let again = parse_inp(&write_inp(&net)).unwrap().network;
        let opts = EpsOptions {
            steps: 4,
            warm_start: true,
            ..Default::default()
        };
        let a = run_eps(&net, &opts).unwrap();
        let b = run_eps(&again, &opts).unwrap();
        for (sa, sb) in a.iter().zip(&b) {
            for (x, y) in sa.solution.state.x.iter().zip(&sb.solution.state.x) {
                assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{name}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn scenario_json_round_trips() {
    for text in [
        bundled::THREE_NODE_SCENARIO_JSON,
        bundled::THREE_NODE_OVERDETERMINED_JSON,
        bundled::EIGHT_NODE_VALVES_SCENARIO_JSON,
    ] {
        let cfg = ScenarioConfig::from_json(text).unwrap();
        assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}

#[test]
fn pse_means_follow_the_nominal_eps() {
    let net = bundled::eight_node_valves();
    let sc = load_scenario(bundled::EIGHT_NODE_VALVES_SCENARIO_JSON, &net).unwrap();
    let run = run_algorithm1(&net, &sc, &PseOptions::default()).unwrap();
    assert_eq!(run.results.len(), sc.horizon);
    for (r, e) in run.results.iter().zip(&run.eps) {
        for (m, x) in r.mean.iter().zip(&e.solution.state.x) {
            assert!((m - x).abs() < 1e-9 * x.abs().max(1.0));
        }
        assert!(r.reconstruction.unwrap() < 1e-10);
    }
}

#[test]
fn deterministic_horizon_has_no_spread() {
    let net = bundled::eight_node();
    let sc = Scenario::deterministic(&net, 6);
    let run = run_algorithm1(
        &net,
        &sc,
        &PseOptions {
            coupled: true,
            ..Default::default()
        },
    )
    .unwrap();
    for r in &run.results {
        assert_eq!(r.cov.amax(), 0.0);
    }
    assert_eq!(run.coupled.unwrap().cov.amax(), 0.0);
}

#[test]
fn anchored_tank_uncertainty_accumulates() {
    let net = bundled::eight_node();
    let mut cfg = ScenarioConfig::from_json(bundled::EIGHT_NODE_SCENARIO_JSON).unwrap();
    cfg.horizon = 4;
    let sc = cfg.resolve(&net).unwrap();
    let run = run_algorithm1(
        &net,
        &sc,
        &PseOptions {
            coupled: true,
            tank_coupling: TankCoupling::AnchoredAtFirstStep,
            ..Default::default()
        },
    )
    .unwrap();
    let c = run.coupled.unwrap();
    let t = net.state_index(StateRef::Head(net.find_node("T8").unwrap()));
    let v: Vec<f64> = (0..4).map(|k| c.block(k)[(t, t)]).collect();
    assert!(v.windows(2).all(|w| w[1] > w[0]), "{v:?}");
    let per_step = run.results[1].variance_of("T8", StateKind::Head).unwrap();
    assert!(v[1] > per_step);
}
