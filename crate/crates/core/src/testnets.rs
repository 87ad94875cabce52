//! Reference networks used by the test suites and the bundled data files.
//!
//! The three-node network (reservoir -> pump -> junction -> 1 km pipe ->
//! tank) is the canonical small case: at a 5 s water-quality step and
//! 1 m/s pipe velocity it segments into 200 pieces, giving 204 states per
//! species. The single-pipe line isolates transport for scheme checks and
//! the lone tank gives a scalar bilinear element.

use nalgebra::DVector;

use crate::network::{
    constant_profile, parse_network, ControlSettings, HydraulicProfile, IntrusionEvent,
    MorSettings, NetworkGraph, ReactionKind, ReactionParams, ScenarioConfig, Scheme, SourceSpec,
    Species,
};

pub const THREE_NODE_TOML: &str = r#"[meta]
name = "three-node"
units = "si"

[[nodes]]
id = "R1"
kind = "reservoir"

[[nodes]]
id = "J1"
kind = "junction"

[[nodes]]
id = "TK1"
kind = "tank"

[[tanks]]
node = "TK1"
initial_volume_m3 = 500.0

[[links]]
id = "PM1"
kind = "pump"
from = "R1"
to = "J1"

[[links]]
id = "P1"
kind = "pipe"
from = "J1"
to = "TK1"
length_m = 1000.0
radius_m = 0.2
"#;

pub fn three_node_graph() -> NetworkGraph {
    parse_network(THREE_NODE_TOML).expect("reference network parses")
}

/// Static hydraulics: 1 m/s in the pipe (125.66 L/s), 20 L/s demand at J1.
pub fn three_node_profile(graph: &NetworkGraph, hyd_step_s: f64, n_steps: usize) -> HydraulicProfile {
    let q_pipe = 1.0 * std::f64::consts::PI * 0.2 * 0.2 * 1000.0; // area * v, in L/s
    let demand = 20.0;
    constant_profile(
        graph,
        hyd_step_s,
        n_steps,
        &DVector::from_vec(vec![1.0, 1.0]),
        &DVector::from_vec(vec![q_pipe + demand, q_pipe]),
        &DVector::from_vec(vec![0.0, demand, 0.0]),
    )
}

pub fn m7_reaction(k_r: f64) -> ReactionParams {
    ReactionParams {
        kind: ReactionKind::M7,
        k_b: 6.366e-6,
        k_w: 1.157e-6,
        k_f: 1.157e-5,
        k_r,
        c_l: 0.0,
    }
}

fn base_scenario(scheme: Scheme, horizon_s: f64) -> ScenarioConfig {
    ScenarioConfig {
        dt_s: 5.0,
        horizon_s,
        hydraulic_step_s: 600.0,
        scheme,
        reaction: m7_reaction(3.0e-4),
        initial_chlorine_mg_l: 0.0,
        initial_reactant_mg_l: 0.0,
        overrides: Vec::new(),
        sources: Vec::new(),
        intrusions: Vec::new(),
        booster_ids: vec!["J1".to_string()],
        intrusion_point_ids: vec!["J1".to_string()],
        chlorine_sensor_ids: vec!["TK1".to_string()],
        reactant_sensor_ids: vec!["TK1".to_string()],
        control: ControlSettings::default(),
        disturbances: Vec::new(),
        mor: MorSettings::default(),
    }
}

/// Step-response scenario: constant 2 mg/L chlorine and 0.5 mg/L reactant at
/// the reservoir. With `nonzero_ics` the rest of the network starts at
/// 0.5 mg/L chlorine and the tank holds 0.05 mg/L reactant.
pub fn three_node_mor_scenario(scheme: Scheme, nonzero_ics: bool) -> ScenarioConfig {
    let mut sc = base_scenario(scheme, 7200.0);
    sc.sources = vec![SourceSpec {
        node: 0,
        chlorine_mg_l: 2.0,
        reactant_mg_l: 0.5,
    }];
    if nonzero_ics {
        sc.initial_chlorine_mg_l = 0.5;
        sc.overrides = vec![crate::network::InitialOverride {
            label: "TK1".to_string(),
            species: Species::Reactant,
            value_mg_l: 0.05,
        }];
    }
    sc
}

/// Regulation scenario: no chlorine from the reservoir, tank starts at
/// 0.45 mg/L, and a 0.1 mg/L reactant intrusion hits J1 for the first hour.
/// Horizons cover the intrusion, the transport delay, and a settling tail.
pub fn three_node_control_scenario(horizon_s: f64) -> ScenarioConfig {
    let mut sc = base_scenario(Scheme::ImplicitUpwind, horizon_s);
    sc.overrides = vec![crate::network::InitialOverride {
        label: "TK1".to_string(),
        species: Species::Chlorine,
        value_mg_l: 0.45,
    }];
    sc.intrusions = vec![IntrusionEvent {
        node: 1,
        concentration_mg_l: 0.1,
        start_s: 0.0,
        end_s: 3600.0,
    }];
    sc.control = ControlSettings {
        mu_per_mg: 1e-4,
        u1_min_mg_min: 0.0,
        u1_max_mg_min: 40_000.0,
        x1_min_mg_l: 0.2,
        x1_max_mg_l: 4.0,
        x2_max_mg_l: None,
        control_interval_s: 600.0,
        n_ctl: 3,
        n_pred: 6,
    };
    sc
}

/// Reservoir feeding one pipe into a demand junction; transport only.
pub fn single_pipe_graph(length_m: f64) -> NetworkGraph {
    let text = format!(
        r#"[meta]
name = "line"
[[nodes]]
id = "R1"
kind = "reservoir"
[[nodes]]
id = "J1"
kind = "junction"
[[links]]
id = "P1"
kind = "pipe"
from = "R1"
to = "J1"
length_m = {length_m}
radius_m = 0.15
"#
    );
    parse_network(&text).expect("line network parses")
}

pub fn single_pipe_profile(
    graph: &NetworkGraph,
    v_m_s: f64,
    hyd_step_s: f64,
    n_steps: usize,
) -> HydraulicProfile {
    let q = v_m_s * std::f64::consts::PI * 0.15 * 0.15 * 1000.0;
    constant_profile(
        graph,
        hyd_step_s,
        n_steps,
        &DVector::from_vec(vec![v_m_s]),
        &DVector::from_vec(vec![q]),
        &DVector::from_vec(vec![0.0, q]),
    )
}

/// A lone tank: one state per species, diagonal dynamics, one bilinear site.
pub fn single_tank_graph(volume_m3: f64) -> NetworkGraph {
    let text = format!(
        r#"[meta]
name = "tank"
[[nodes]]
id = "TK1"
kind = "tank"
[[tanks]]
node = "TK1"
initial_volume_m3 = {volume_m3}
"#
    );
    parse_network(&text).expect("tank network parses")
}

pub fn single_tank_profile(graph: &NetworkGraph, hyd_step_s: f64, n_steps: usize) -> HydraulicProfile {
    constant_profile(
        graph,
        hyd_step_s,
        n_steps,
        &DVector::zeros(0),
        &DVector::zeros(0),
        &DVector::zeros(1),
    )
}

/// Five states per species: reservoir, junction, tank, pump, one segment.
pub fn five_state_graph() -> NetworkGraph {
    let text = r#"[meta]
name = "five"
[[nodes]]
id = "R1"
kind = "reservoir"
[[nodes]]
id = "J1"
kind = "junction"
[[nodes]]
id = "TK1"
kind = "tank"
[[tanks]]
node = "TK1"
initial_volume_m3 = 50.0
[[links]]
id = "PM1"
kind = "pump"
from = "R1"
to = "J1"
[[links]]
id = "P1"
kind = "pipe"
from = "J1"
to = "TK1"
length_m = 100.0
radius_m = 0.1
"#;
    parse_network(text).expect("five-state network parses")
}

/// Hydraulics that segment P1 into exactly one piece at `dt_s`.
pub fn five_state_profile(graph: &NetworkGraph, hyd_step_s: f64, n_steps: usize) -> HydraulicProfile {
    let q_pipe = 1.0 * std::f64::consts::PI * 0.1 * 0.1 * 1000.0;
    let demand = 5.0;
    constant_profile(
        graph,
        hyd_step_s,
        n_steps,
        &DVector::from_vec(vec![1.0, 1.0]),
        &DVector::from_vec(vec![q_pipe + demand, q_pipe]),
        &DVector::from_vec(vec![0.0, demand, 0.0]),
    )
}

/// Scenario skeleton for the toy networks; callers adjust fields.
pub fn toy_scenario(scheme: Scheme, dt_s: f64, horizon_s: f64, hyd_step_s: f64) -> ScenarioConfig {
    ScenarioConfig {
        dt_s,
        horizon_s,
        hydraulic_step_s: hyd_step_s,
        scheme,
        reaction: m7_reaction(0.0),
        initial_chlorine_mg_l: 0.0,
        initial_reactant_mg_l: 0.0,
        overrides: Vec::new(),
        sources: Vec::new(),
        intrusions: Vec::new(),
        booster_ids: Vec::new(),
        intrusion_point_ids: Vec::new(),
        chlorine_sensor_ids: Vec::new(),
        reactant_sensor_ids: Vec::new(),
        control: ControlSettings::default(),
        disturbances: Vec::new(),
        mor: MorSettings::default(),
    }
}
