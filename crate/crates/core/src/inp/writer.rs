use std::fmt::Write;

use crate::network::{Network, ValveKind, ValveStatus};

/// Render a network as INP text that `parse_inp` reads back field for field.
pub fn write_inp(net: &Network) -> String {
    let mut s = String::new();
    let node = |n| net.node_id(n).to_string();

    let _ = writeln!(s, "[TITLE]");
    for t in &net.title {
        let _ = writeln!(s, "{t}");
    }

    let _ = writeln!(s, "\n[JUNCTIONS]\n;ID\tElev\tDemand\tPattern");
    for j in &net.junctions {
        let _ = write!(s, "{}\t{}\t{}", j.id, j.elevation, j.base_demand);
        if let Some(p) = &j.pattern {
            let _ = write!(s, "\t{p}");
        }
        s.push('\n');
    }

    let _ = writeln!(s, "\n[RESERVOIRS]\n;ID\tHead");
    for r in &net.reservoirs {
        let _ = writeln!(s, "{}\t{}", r.id, r.head);
    }

    let _ = writeln!(s, "\n[TANKS]\n;ID\tElev\tInitLvl\tMinLvl\tMaxLvl\tDiam");
    for t in &net.tanks {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            t.id, t.elevation, t.initial_level, t.min_level, t.max_level, t.diameter
        );
    }

    let _ = writeln!(s, "\n[PIPES]\n;ID\tNode1\tNode2\tLength\tDiam\tRough");
    for p in &net.pipes {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            p.id,
            node(p.from),
            node(p.to),
            p.length,
            p.diameter_in,
            p.roughness
        );
    }

    let _ = writeln!(s, "\n[PUMPS]\n;ID\tNode1\tNode2\tParameters");
    for m in &net.pumps {
        let _ = writeln!(s, "{}\t{}\t{}\tHEAD {}", m.id, node(m.from), node(m.to), m.curve_id);
    }

    let _ = writeln!(s, "\n[VALVES]\n;ID\tNode1\tNode2\tDiam\tType\tSetting");
    for v in &net.valves {
        let kind = match v.kind {
            ValveKind::Fcv => "FCV",
            ValveKind::Prv => "PRV",
        };
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            v.id,
            node(v.from),
            node(v.to),
            v.diameter_in,
            kind,
            v.setting
        );
    }

    let _ = writeln!(s, "\n[STATUS]");
    for v in &net.valves {
        if v.status == ValveStatus::Open {
            let _ = writeln!(s, "{}\tOPEN", v.id);
        }
    }

    let _ = writeln!(s, "\n[PATTERNS]");
    for p in &net.patterns {
        for chunk in p.multipliers.chunks(6) {
            let _ = write!(s, "{}", p.id);
            for m in chunk {
                let _ = write!(s, "\t{m}");
            }
            s.push('\n');
        }
    }

    let _ = writeln!(s, "\n[CURVES]");
    for c in &net.curves {
        for (x, y) in &c.points {
            let _ = writeln!(s, "{}\t{x}\t{y}", c.id);
        }
    }

    let _ = writeln!(s, "\n[TIMES]");
    let _ = writeln!(s, "Duration\t{}", clock(net.times.duration));
    let _ = writeln!(s, "Hydraulic Timestep\t{}", clock(net.times.hydraulic_step));
    let _ = writeln!(s, "Pattern Timestep\t{}", clock(net.times.pattern_step));

    let _ = writeln!(s, "\n[OPTIONS]\nUnits\tGPM\nHeadloss\tH-W\n\n[END]");
    s
}

fn clock(secs: f64) -> String {
    if secs.fract() == 0.0 && secs >= 0.0 && secs < 1e15 {
        let t = secs as u64;
        format!("{}:{:02}:{:02}", t / 3600, (t % 3600) / 60, t % 60)
    } else {
        format!("{secs} SEC")
    }
}
