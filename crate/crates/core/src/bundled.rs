//! Networks and scenarios shipped with the crate.

use crate::inp::parse_inp;
use crate::network::Network;

pub const THREE_NODE_INP: &str = include_str!("../data/three_node.inp");
pub const EIGHT_NODE_INP: &str = include_str!("../data/eight_node.inp");
pub const EIGHT_NODE_VALVES_INP: &str = include_str!("../data/eight_node_valves.inp");

pub const THREE_NODE_SCENARIO_JSON: &str = include_str!("../data/three_node.scenario.json");
pub const THREE_NODE_OVERDETERMINED_JSON: &str =
    include_str!("../data/three_node_overdetermined.scenario.json");
pub const EIGHT_NODE_SCENARIO_JSON: &str = include_str!("../data/eight_node.scenario.json");
pub const EIGHT_NODE_VALVES_SCENARIO_JSON: &str =
    include_str!("../data/eight_node_valves.scenario.json");
pub const VALVE_SCHEDULE_JSON: &str = include_str!("../data/eight_node_valves.schedule.json");

fn load(text: &str) -> Network {
    parse_inp(text).expect("bundled network parses").network
}

/// Reservoir, pump, one demand junction, pipe, tank.
pub fn three_node() -> Network {
    load(THREE_NODE_INP)
}

/// Looped 8-node network with a pumped source and an elevated tank.
pub fn eight_node() -> Network {
    load(EIGHT_NODE_INP)
}

/// The 8-node network with an FCV on J3-J4 and a PRV feeding a three-junction branch.
pub fn eight_node_valves() -> Network {
    load(EIGHT_NODE_VALVES_INP)
}

/// Every bundled network with its name.
pub fn all() -> Vec<(&'static str, Network)> {
    vec![
        ("three_node", three_node()),
        ("eight_node", eight_node()),
        ("eight_node_valves", eight_node_valves()),
    ]
}
