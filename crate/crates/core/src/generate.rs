//! Synthetic grid networks for scaling tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::inp::fit_pump_curve;
use crate::network::{
    Curve, Junction, Network, NodeRef, Pattern, Pipe, Pump, Reservoir, Tank, Times,
};

#[derive(Clone, Debug, PartialEq)]
pub struct GridOptions {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    /// Range of junction base demands (GPM).
    pub demand: (f64, f64),
    /// Range of pipe lengths (ft).
    pub length: (f64, f64),
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            rows: 13,
            cols: 14,
            seed: 2019,
            demand: (5.0, 30.0),
            length: (400.0, 1200.0),
        }
    }
}

/// A rows × cols junction grid fed by a pumped reservoir at one corner and
/// floating on a tank at the opposite corner. Same options, same network.
pub fn grid_network(opts: &GridOptions) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (rows, cols) = (opts.rows.max(1), opts.cols.max(1));
    let id = |r: usize, c: usize| r * cols + c;
    let mut net = Network {
        title: vec![format!("Generated {rows}x{cols} grid (seed {})", opts.seed)],
        times: Times {
            duration: 24.0 * 3600.0,
            hydraulic_step: 3600.0,
            pattern_step: 6.0 * 3600.0,
        },
        ..Default::default()
    };
    net.patterns.push(Pattern {
        id: "1".into(),
        multipliers: vec![0.5, 1.3, 1.0, 1.2],
    });
    let mut total = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let d = round2(rng.gen_range(opts.demand.0..=opts.demand.1));
            total += d;
            net.junctions.push(Junction {
                id: format!("J{}", id(r, c) + 1),
                elevation: round2(rng.gen_range(600.0..650.0)),
                base_demand: d,
                pattern: Some("1".into()),
            });
        }
    }
    net.reservoirs.push(Reservoir {
        id: "R1".into(),
        head: 700.0,
    });
    net.tanks.push(Tank {
        id: "T1".into(),
        elevation: 830.0,
        initial_level: 10.0,
        min_level: 0.0,
        max_level: 30.0,
        diameter: 80.0,
    });
    let diameters = [8.0, 10.0, 12.0, 16.0];
    let pipe = |net: &mut Network, rng: &mut ChaCha8Rng, from: NodeRef, to: NodeRef| {
        let n = net.pipes.len() + 1;
        net.pipes.push(Pipe {
            id: format!("P{n}"),
            from,
            to,
            length: round2(rng.gen_range(opts.length.0..=opts.length.1)),
            diameter_in: diameters[rng.gen_range(0..diameters.len())],
            roughness: rng.gen_range(90..=140) as f64,
        });
    };
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                pipe(&mut net, &mut rng, NodeRef::junction(id(r, c)), NodeRef::junction(id(r, c + 1)));
            }
            if r + 1 < rows {
                pipe(&mut net, &mut rng, NodeRef::junction(id(r, c)), NodeRef::junction(id(r + 1, c)));
            }
        }
    }
    pipe(
        &mut net,
        &mut rng,
        NodeRef::junction(id(rows - 1, cols - 1)),
        NodeRef::tank(0),
    );
    let design = (total.round()).max(1.0);
    let points = vec![(design, 160.0)];
    let curve = fit_pump_curve(&points).expect("single-point curve");
    net.curves.push(Curve {
        id: "C1".into(),
        points,
    });
    net.pumps.push(Pump {
        id: "PU1".into(),
        from: NodeRef::reservoir(0),
        to: NodeRef::junction(0),
        curve_id: "C1".into(),
        curve,
    });
    net
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}
