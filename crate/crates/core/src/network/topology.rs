use std::collections::BTreeMap;

use serde::Serialize;

use super::{LinkRef, Network, NodeKind, ValveStatus};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "finding", rename_all = "snake_case")]
pub enum Finding {
    /// The graph splits into several connected components (node ids per component).
    Disconnected { components: Vec<Vec<String>> },
    /// A node with no incident link.
    IsolatedNode { id: String },
    /// Open valves closing a cycle, either among themselves or between fixed-head nodes.
    OpenValveLoop { valves: Vec<String> },
    /// A connected component without any reservoir or tank.
    NoFixedHead { nodes: Vec<String> },
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Finding::Disconnected { components } => {
                write!(f, "network has {} disconnected components", components.len())
            }
            Finding::IsolatedNode { id } => write!(f, "node '{id}' has no links"),
            Finding::OpenValveLoop { valves } => {
                write!(f, "open-valve loop through [{}]", valves.join(", "))
            }
            Finding::NoFixedHead { nodes } => write!(
                f,
                "component containing '{}' has no reservoir or tank",
                nodes.first().map(String::as_str).unwrap_or("?")
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TopologyReport {
    pub findings: Vec<Finding>,
}

impl TopologyReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        self.0[a.max(b)] = a.min(b);
        true
    }
}

/// Topology findings using each valve's default status.
pub fn validate_topology(net: &Network) -> TopologyReport {
    let statuses: Vec<ValveStatus> = net.valves.iter().map(|v| v.status).collect();
    validate_topology_with(net, &statuses)
}

pub fn validate_topology_with(net: &Network, statuses: &[ValveStatus]) -> TopologyReport {
    let n = net.n_h();
    let mut findings = Vec::new();
    let mut degree = vec![0usize; n];
    let mut dsu = Dsu::new(n);
    for l in net.links() {
        let (a, b) = net.endpoints(l);
        let (a, b) = (net.head_index(a), net.head_index(b));
        if a < n && b < n {
            degree[a] += 1;
            degree[b] += 1;
            dsu.union(a, b);
        }
    }

    let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = dsu.find(i);
        comps.entry(r).or_default().push(i);
    }
    let named = |ids: &[usize]| -> Vec<String> {
        ids.iter().map(|&i| net.node_id(net.node_at(i)).to_string()).collect()
    };
    if comps.len() > 1 {
        findings.push(Finding::Disconnected {
            components: comps.values().map(|c| named(c)).collect(),
        });
    }
    for (i, &d) in degree.iter().enumerate() {
        if d == 0 {
            findings.push(Finding::IsolatedNode {
                id: net.node_id(net.node_at(i)).to_string(),
            });
        }
    }
    for c in comps.values() {
        let fixed = c
            .iter()
            .any(|&i| net.node_at(i).kind != NodeKind::Junction);
        if !fixed && !(c.len() == 1 && degree[c[0]] == 0) {
            findings.push(Finding::NoFixedHead { nodes: named(c) });
        }
    }

    // Open valves have zero head loss; all fixed-head nodes act as one ground node.
    let ground = n;
    let vertex = |i: usize| {
        if net.node_at(i).kind == NodeKind::Junction {
            i
        } else {
            ground
        }
    };
    let mut forest = Dsu::new(n + 1);
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n + 1];
    for (v, valve) in net.valves.iter().enumerate() {
        if statuses.get(v).copied().unwrap_or(valve.status) != ValveStatus::Open {
            continue;
        }
        let a = vertex(net.head_index(valve.from));
        let b = vertex(net.head_index(valve.to));
        if forest.union(a, b) {
            adj[a].push((b, v));
            adj[b].push((a, v));
        } else {
            let mut ids: Vec<String> = path(&adj, a, b)
                .into_iter()
                .map(|k| net.link_id(LinkRef::valve(k)).to_string())
                .collect();
            ids.push(valve.id.clone());
            findings.push(Finding::OpenValveLoop { valves: ids });
        }
    }
    TopologyReport { findings }
}

/// Valve indices on the forest path from `a` to `b`.
fn path(adj: &[Vec<(usize, usize)>], a: usize, b: usize) -> Vec<usize> {
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; adj.len()];
    let mut seen = vec![false; adj.len()];
    let mut queue = std::collections::VecDeque::from([a]);
    seen[a] = true;
    while let Some(u) = queue.pop_front() {
        if u == b {
            break;
        }
        for &(w, v) in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                prev[w] = Some((u, v));
                queue.push_back(w);
            }
        }
    }
    let mut out = Vec::new();
    let mut cur = b;
    while let Some((p, v)) = prev[cur] {
        out.push(v);
        cur = p;
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::network::{Valve, ValveKind};

    #[test]
    fn bundled_networks_are_clean() {
        assert!(validate_topology(&bundled::three_node()).is_clean());
        assert!(validate_topology(&bundled::eight_node()).is_clean());
        assert!(validate_topology(&bundled::eight_node_valves()).is_clean());
    }

    #[test]
    fn parallel_open_valves_form_a_loop() {
        let mut net = bundled::eight_node();
        let (from, to) = (net.pipes[0].from, net.pipes[0].to);
        for id in ["VA", "VB"] {
            net.valves.push(Valve {
                id: id.into(),
                from,
                to,
                diameter_in: 12.0,
                kind: ValveKind::Fcv,
                setting: 100.0,
                status: ValveStatus::Open,
            });
        }
        let report = validate_topology(&net);
        assert_eq!(
            report.findings,
            vec![Finding::OpenValveLoop {
                valves: vec!["VA".into(), "VB".into()]
            }]
        );
        let active = vec![ValveStatus::Active, ValveStatus::Open];
        assert!(validate_topology_with(&net, &active).is_clean());
    }

    #[test]
    fn open_valve_between_fixed_heads_is_a_loop() {
        let mut net = bundled::three_node();
        net.valves.push(Valve {
            id: "V13".into(),
            from: crate::network::NodeRef::reservoir(0),
            to: crate::network::NodeRef::tank(0),
            diameter_in: 12.0,
            kind: ValveKind::Prv,
            setting: 800.0,
            status: ValveStatus::Open,
        });
        let report = validate_topology(&net);
        assert!(matches!(report.findings[..], [Finding::OpenValveLoop { .. }]));
    }

    #[test]
    fn isolated_and_disconnected_nodes_are_reported() {
        let mut net = bundled::three_node();
        net.junctions.push(crate::network::Junction {
            id: "J9".into(),
            elevation: 0.0,
            base_demand: 0.0,
            pattern: None,
        });
        let report = validate_topology(&net);
        assert!(report
            .findings
            .iter()
            .any(|f| matches!(f, Finding::IsolatedNode { id } if id == "J9")));
        assert!(report
            .findings
            .iter()
            .any(|f| matches!(f, Finding::Disconnected { components } if components.len() == 2)));
    }
}
