//! Scenario configuration: reaction model, initial/source concentrations,
//! intrusion events, devices, and simulation/control settings.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::graph::{NetworkGraph, NodeKind};
use super::index::StateIndexMap;
use super::layout::DeviceLayout;
use super::NetworkError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Chlorine,
    Reactant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    ExplicitUpwind,
    ImplicitUpwind,
}

impl Scheme {
    pub fn parse(s: &str) -> Result<Self, NetworkError> {
        match s {
            "explicit" => Ok(Scheme::ExplicitUpwind),
            "implicit" => Ok(Scheme::ImplicitUpwind),
            other => Err(NetworkError::Scenario {
                message: format!("unknown scheme '{other}' (expected explicit or implicit)"),
            }),
        }
    }
}

/// Decay/reaction model selector from the generalized framework.
///
/// M1, M2, and M7 are built; M3/M4/M8 are enumerated extension points that
/// reduce to the M7 machinery; M5/M6 are out of scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReactionKind {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    M7,
    M8,
}

impl ReactionKind {
    pub fn is_implemented(self) -> bool {
        matches!(self, ReactionKind::M1 | ReactionKind::M2 | ReactionKind::M7)
    }

    /// Whether the built dynamics carry the bilinear mutual-reaction term.
    pub fn is_bilinear(self) -> bool {
        self == ReactionKind::M7
    }
}

/// Reaction parameters in internal units (1/s, m/s, L/(mg*s), mg/L).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionParams {
    pub kind: ReactionKind,
    pub k_b: f64,
    pub k_w: f64,
    pub k_f: f64,
    pub k_r: f64,
    /// Stable-component floor, M2 only.
    pub c_l: f64,
}

impl ReactionParams {
    /// First-order chlorine decay rate in a pipe of radius `r` (1/s):
    /// bulk plus wall mass transfer.
    pub fn pipe_decay(&self, radius_m: f64) -> f64 {
        if self.k_w + self.k_f == 0.0 {
            return self.k_b;
        }
        self.k_b + 2.0 * self.k_w * self.k_f / (radius_m * (self.k_w + self.k_f))
    }

    /// First-order chlorine decay rate in tanks (bulk only).
    pub fn tank_decay(&self) -> f64 {
        self.k_b
    }

    /// Mutual reaction rate; zero for the linear models.
    pub fn mutual_rate(&self) -> f64 {
        if self.kind.is_bilinear() {
            self.k_r
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntrusionEvent {
    pub node: usize,
    pub concentration_mg_l: f64,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub node: usize,
    pub chlorine_mg_l: f64,
    pub reactant_mg_l: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialOverride {
    pub label: String,
    pub species: Species,
    pub value_mg_l: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Disturbance {
    pub time_s: f64,
    pub node: usize,
    pub species: Species,
    pub value_mg_l: f64,
}

/// Control problem settings; EPA chlorine bounds by default.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSettings {
    pub mu_per_mg: f64,
    pub u1_min_mg_min: f64,
    pub u1_max_mg_min: f64,
    pub x1_min_mg_l: f64,
    pub x1_max_mg_l: f64,
    /// Regulatory ceiling for the reactant; `None` applies the
    /// detected-intrusion tightening rule.
    pub x2_max_mg_l: Option<f64>,
    pub control_interval_s: f64,
    pub n_ctl: usize,
    pub n_pred: usize,
}

impl Default for ControlSettings {
    fn default() -> Self {
        Self {
            mu_per_mg: 1e-4,
            u1_min_mg_min: 0.0,
            u1_max_mg_min: 1e5,
            x1_min_mg_l: 0.2,
            x1_max_mg_l: 4.0,
            x2_max_mg_l: None,
            control_interval_s: 600.0,
            n_ctl: 1,
            n_pred: 2,
        }
    }
}

/// Knobs for snapshot collection and operating-point scheduling.
#[derive(Debug, Clone, PartialEq)]
pub struct MorSettings {
    /// Impulse gain on booster channels relative to the constant channel.
    pub booster_impulse_gain: f64,
    /// Snapshot length as a multiple of the a-priori lower bound.
    pub snapshot_factor: f64,
    pub op_window_s: f64,
    pub op_early_update_s: f64,
    pub op_threshold_mg_l: f64,
}

impl Default for MorSettings {
    fn default() -> Self {
        Self {
            booster_impulse_gain: 10.0,
            snapshot_factor: 2.0,
            op_window_s: 3600.0,
            op_early_update_s: 300.0,
            op_threshold_mg_l: 0.05,
        }
    }
}

/// Fully validated scenario in internal units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub dt_s: f64,
    pub horizon_s: f64,
    pub hydraulic_step_s: f64,
    pub scheme: Scheme,
    pub reaction: ReactionParams,
    pub initial_chlorine_mg_l: f64,
    pub initial_reactant_mg_l: f64,
    pub overrides: Vec<InitialOverride>,
    pub sources: Vec<SourceSpec>,
    pub intrusions: Vec<IntrusionEvent>,
    pub booster_ids: Vec<String>,
    pub intrusion_point_ids: Vec<String>,
    pub chlorine_sensor_ids: Vec<String>,
    pub reactant_sensor_ids: Vec<String>,
    pub control: ControlSettings,
    pub disturbances: Vec<Disturbance>,
    pub mor: MorSettings,
}

impl ScenarioConfig {
    pub fn n_wq_steps(&self) -> usize {
        (self.horizon_s / self.dt_s).round() as usize
    }

    pub fn steps_per_hydraulic(&self) -> usize {
        (self.hydraulic_step_s / self.dt_s).round() as usize
    }

    pub fn device_layout(&self, graph: &NetworkGraph) -> Result<DeviceLayout, NetworkError> {
        DeviceLayout::from_ids(
            graph,
            &self.booster_ids,
            &self.intrusion_point_ids,
            &self.chlorine_sensor_ids,
            &self.reactant_sensor_ids,
        )
    }

    /// Stacked initial state: global fill, reservoir sources, per-element
    /// overrides. Reservoir rows are identities, so source concentrations
    /// persist for the whole run.
    pub fn initial_state(
        &self,
        graph: &NetworkGraph,
        map: &StateIndexMap,
    ) -> Result<DVector<f64>, NetworkError> {
        let n = map.n();
        let mut x0 = DVector::zeros(2 * n);
        for i in 0..n {
            x0[i] = self.initial_chlorine_mg_l;
            x0[n + i] = self.initial_reactant_mg_l;
        }
        for s in &self.sources {
            let state = map.node_state(s.node);
            x0[state] = s.chlorine_mg_l;
            x0[n + state] = s.reactant_mg_l;
        }
        for o in &self.overrides {
            let state = map
                .state_of_label(graph, &o.label)
                .ok_or_else(|| NetworkError::UnknownElement { id: o.label.clone() })?;
            match o.species {
                Species::Chlorine => x0[state] = o.value_mg_l,
                Species::Reactant => x0[n + state] = o.value_mg_l,
            }
        }
        Ok(x0)
    }
}

// ---- file format ----

#[derive(Debug, Deserialize)]
struct SimulationTable {
    delta_t_s: f64,
    horizon_s: f64,
    hydraulic_step_s: f64,
    scheme: String,
}

#[derive(Debug, Deserialize)]
struct ReactionTable {
    kind: ReactionKind,
    #[serde(default)]
    k_b_per_s: f64,
    #[serde(default)]
    k_w_m_per_s: f64,
    #[serde(default)]
    k_f_m_per_s: f64,
    #[serde(default)]
    k_r_l_per_mg_s: f64,
    #[serde(default)]
    c_l_mg_per_l: f64,
}

#[derive(Debug, Deserialize)]
struct OverrideTable {
    element: String,
    species: Species,
    value_mg_per_l: f64,
}

#[derive(Debug, Deserialize, Default)]
struct InitialTable {
    #[serde(default)]
    chlorine_mg_per_l: f64,
    #[serde(default)]
    reactant_mg_per_l: f64,
    #[serde(default, rename = "override")]
    overrides: Vec<OverrideTable>,
}

#[derive(Debug, Deserialize)]
struct SourceTable {
    node: String,
    #[serde(default)]
    chlorine_mg_per_l: f64,
    #[serde(default)]
    reactant_mg_per_l: f64,
}

#[derive(Debug, Deserialize)]
struct IntrusionTable {
    node: String,
    concentration_mg_per_l: f64,
    start_s: f64,
    end_s: f64,
}

#[derive(Debug, Deserialize, Default)]
struct DevicesTable {
    #[serde(default)]
    boosters: Vec<String>,
    #[serde(default)]
    chlorine_sensors: Vec<String>,
    #[serde(default)]
    reactant_sensors: Vec<String>,
    #[serde(default)]
    intrusion_points: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ControlTable {
    mu_per_mg: Option<f64>,
    u1_min_mg_per_min: Option<f64>,
    u1_max_mg_per_min: Option<f64>,
    x1_min_mg_per_l: Option<f64>,
    x1_max_mg_per_l: Option<f64>,
    x2_max_mg_per_l: Option<f64>,
    control_interval_s: Option<f64>,
    n_ctl: Option<usize>,
    n_pred: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct DisturbanceTable {
    time_s: f64,
    node: String,
    species: Species,
    value_mg_per_l: f64,
}

#[derive(Debug, Deserialize)]
struct MorTable {
    booster_impulse_gain: Option<f64>,
    snapshot_factor: Option<f64>,
    op_window_s: Option<f64>,
    op_early_update_s: Option<f64>,
    op_threshold_mg_per_l: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct ScenarioFile {
    simulation: SimulationTable,
    reaction: ReactionTable,
    #[serde(default)]
    initial: InitialTable,
    #[serde(default)]
    sources: Vec<SourceTable>,
    #[serde(default)]
    intrusions: Vec<IntrusionTable>,
    #[serde(default)]
    devices: DevicesTable,
    control: Option<ControlTable>,
    #[serde(default)]
    disturbances: Vec<DisturbanceTable>,
    mor: Option<MorTable>,
}

impl ScenarioConfig {
    /// Parse and validate a scenario file against its network.
    pub fn parse(text: &str, graph: &NetworkGraph) -> Result<Self, NetworkError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| NetworkError::Scenario {
            message: e.message().to_string(),
        })?;

        let dt = file.simulation.delta_t_s;
        let horizon = file.simulation.horizon_s;
        let hyd = file.simulation.hydraulic_step_s;
        if dt <= 0.0 || horizon <= 0.0 || hyd <= 0.0 {
            return Err(NetworkError::Scenario {
                message: "delta_t_s, horizon_s, hydraulic_step_s must be positive".to_string(),
            });
        }
        let ratio = hyd / dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(NetworkError::Scenario {
                message: format!(
                    "hydraulic step {hyd} s must be an integer multiple of delta_t {dt} s"
                ),
            });
        }

        let reaction = ReactionParams {
            kind: file.reaction.kind,
            k_b: file.reaction.k_b_per_s,
            k_w: file.reaction.k_w_m_per_s,
            k_f: file.reaction.k_f_m_per_s,
            k_r: file.reaction.k_r_l_per_mg_s,
            c_l: file.reaction.c_l_mg_per_l,
        };
        if reaction.k_r < 0.0 {
            return Err(NetworkError::Scenario {
                message: "mutual reaction rate k_r must be nonnegative".to_string(),
            });
        }

        let resolve_node = |id: &str| graph.node_index(id);
        let sources = file
            .sources
            .iter()
            .map(|s| {
                let node = resolve_node(&s.node)?;
                if graph.nodes()[node].kind != NodeKind::Reservoir {
                    return Err(NetworkError::Scenario {
                        message: format!("source node '{}' is not a reservoir", s.node),
                    });
                }
                if s.chlorine_mg_per_l < 0.0 || s.reactant_mg_per_l < 0.0 {
                    return Err(NetworkError::Scenario {
                        message: format!("negative source concentration at '{}'", s.node),
                    });
                }
                Ok(SourceSpec {
                    node,
                    chlorine_mg_l: s.chlorine_mg_per_l,
                    reactant_mg_l: s.reactant_mg_per_l,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let intrusions = file
            .intrusions
            .iter()
            .map(|e| {
                if e.concentration_mg_per_l < 0.0 {
                    return Err(NetworkError::Scenario {
                        message: format!("negative intrusion concentration at '{}'", e.node),
                    });
                }
                if !(e.start_s < e.end_s && e.end_s <= horizon) {
                    return Err(NetworkError::Scenario {
                        message: format!(
                            "intrusion window [{}, {}] must satisfy start < end <= horizon",
                            e.start_s, e.end_s
                        ),
                    });
                }
                Ok(IntrusionEvent {
                    node: resolve_node(&e.node)?,
                    concentration_mg_l: e.concentration_mg_per_l,
                    start_s: e.start_s,
                    end_s: e.end_s,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        if file.initial.chlorine_mg_per_l < 0.0 || file.initial.reactant_mg_per_l < 0.0 {
            return Err(NetworkError::Scenario {
                message: "negative initial concentration".to_string(),
            });
        }
        let overrides = file
            .initial
            .overrides
            .iter()
            .map(|o| {
                if o.value_mg_per_l < 0.0 {
                    return Err(NetworkError::Scenario {
                        message: format!("negative initial override at '{}'", o.element),
                    });
                }
                Ok(InitialOverride {
                    label: o.element.clone(),
                    species: o.species,
                    value_mg_l: o.value_mg_per_l,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        // Intrusion points default to the event locations, first appearance order.
        let mut intrusion_point_ids = file.devices.intrusion_points.clone();
        if intrusion_point_ids.is_empty() {
            for e in &file.intrusions {
                if !intrusion_point_ids.contains(&e.node) {
                    intrusion_point_ids.push(e.node.clone());
                }
            }
        }
        for id in file
            .devices
            .boosters
            .iter()
            .chain(&intrusion_point_ids)
            .chain(&file.devices.chlorine_sensors)
            .chain(&file.devices.reactant_sensors)
        {
            resolve_node(id)?;
        }

        let defaults = ControlSettings::default();
        let control = match file.control {
            None => defaults,
            Some(t) => {
                let c = ControlSettings {
                    mu_per_mg: t.mu_per_mg.unwrap_or(defaults.mu_per_mg),
                    u1_min_mg_min: t.u1_min_mg_per_min.unwrap_or(defaults.u1_min_mg_min),
                    u1_max_mg_min: t.u1_max_mg_per_min.unwrap_or(defaults.u1_max_mg_min),
                    x1_min_mg_l: t.x1_min_mg_per_l.unwrap_or(defaults.x1_min_mg_l),
                    x1_max_mg_l: t.x1_max_mg_per_l.unwrap_or(defaults.x1_max_mg_l),
                    x2_max_mg_l: t.x2_max_mg_per_l,
                    control_interval_s: t.control_interval_s.unwrap_or(defaults.control_interval_s),
                    n_ctl: t.n_ctl.unwrap_or(defaults.n_ctl),
                    n_pred: 0,
                };
                let n_ctl = c.n_ctl.max(1);
                let n_pred = t.n_pred.unwrap_or(2 * n_ctl);
                ControlSettings {
                    n_ctl,
                    n_pred,
                    ..c
                }
            }
        };
        if !(control.x1_min_mg_l >= 0.0 && control.x1_min_mg_l < control.x1_max_mg_l) {
            return Err(NetworkError::Scenario {
                message: "chlorine bounds must satisfy 0 <= x1_min < x1_max".to_string(),
            });
        }
        if control.u1_min_mg_min > control.u1_max_mg_min {
            return Err(NetworkError::Scenario {
                message: "booster bounds must satisfy u1_min <= u1_max".to_string(),
            });
        }
        if control.n_ctl > control.n_pred {
            return Err(NetworkError::Scenario {
                message: "control horizon must not exceed prediction horizon".to_string(),
            });
        }

        let disturbances = file
            .disturbances
            .iter()
            .map(|d| {
                Ok(Disturbance {
                    time_s: d.time_s,
                    node: resolve_node(&d.node)?,
                    species: d.species,
                    value_mg_l: d.value_mg_per_l,
                })
            })
            .collect::<Result<Vec<_>, NetworkError>>()?;

        let mor_defaults = MorSettings::default();
        let mor = match file.mor {
            None => mor_defaults,
            Some(t) => MorSettings {
                booster_impulse_gain: t
                    .booster_impulse_gain
                    .unwrap_or(mor_defaults.booster_impulse_gain),
                snapshot_factor: t.snapshot_factor.unwrap_or(mor_defaults.snapshot_factor),
                op_window_s: t.op_window_s.unwrap_or(mor_defaults.op_window_s),
                op_early_update_s: t
                    .op_early_update_s
                    .unwrap_or(mor_defaults.op_early_update_s),
                op_threshold_mg_l: t
                    .op_threshold_mg_per_l
                    .unwrap_or(mor_defaults.op_threshold_mg_l),
            },
        };

        Ok(ScenarioConfig {
            dt_s: dt,
            horizon_s: horizon,
            hydraulic_step_s: hyd,
            scheme: Scheme::parse(&file.simulation.scheme)?,
            reaction,
            initial_chlorine_mg_l: file.initial.chlorine_mg_per_l,
            initial_reactant_mg_l: file.initial.reactant_mg_per_l,
            overrides,
            sources,
            intrusions,
            booster_ids: file.devices.boosters,
            intrusion_point_ids,
            chlorine_sensor_ids: file.devices.chlorine_sensors,
            reactant_sensor_ids: file.devices.reactant_sensors,
            control,
            disturbances,
            mor,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::graph::{parse_network, tests::THREE_NODE};

    pub(crate) const SCENARIO: &str = r#"
[simulation]
delta_t_s = 5.0
horizon_s = 7200.0
hydraulic_step_s = 600.0
scheme = "implicit"

[reaction]
kind = "M7"
k_b_per_s = 6.366e-6
k_w_m_per_s = 1.157e-6
k_f_m_per_s = 1.157e-5
k_r_l_per_mg_s = 3.0e-4

[initial]
chlorine_mg_per_l = 0.0
reactant_mg_per_l = 0.0

[[sources]]
node = "R1"
chlorine_mg_per_l = 2.0
reactant_mg_per_l = 0.5

[[intrusions]]
node = "J1"
concentration_mg_per_l = 0.1
start_s = 0.0
end_s = 3600.0

[devices]
boosters = ["J1"]
chlorine_sensors = ["TK1"]
reactant_sensors = ["TK1"]
"#;

    #[test]
    fn parses_and_validates() {
        let g = parse_network(THREE_NODE).unwrap();
        let sc = ScenarioConfig::parse(SCENARIO, &g).unwrap();
        assert_eq!(sc.n_wq_steps(), 1440);
        assert_eq!(sc.steps_per_hydraulic(), 120);
        assert_eq!(sc.intrusion_point_ids, vec!["J1".to_string()]);
        assert_eq!(sc.reaction.kind, ReactionKind::M7);
        assert!(sc.reaction.kind.is_bilinear());
    }

    #[test]
    fn rejects_nonmultiple_hydraulic_step() {
        let g = parse_network(THREE_NODE).unwrap();
        let text = SCENARIO.replace("hydraulic_step_s = 600.0", "hydraulic_step_s = 601.0");
        assert!(ScenarioConfig::parse(&text, &g).is_err());
    }

    #[test]
    fn rejects_bad_intrusion_window() {
        let g = parse_network(THREE_NODE).unwrap();
        let text = SCENARIO.replace("end_s = 3600.0", "end_s = 7300.0");
        assert!(ScenarioConfig::parse(&text, &g).is_err());
    }

    #[test]
    fn pipe_decay_formula() {
        // k_b = 0.55/day plus a wall term, checked against direct evaluation.
        let day = 86400.0;
        let params = ReactionParams {
            kind: ReactionKind::M7,
            k_b: 0.55 / day,
            k_w: 0.12 / day,
            k_f: 1.4 / day,
            k_r: 0.0,
            c_l: 0.0,
        };
        let r = 0.15;
        let expected = 0.55 / day + 2.0 * (0.12 / day) * (1.4 / day) / (r * (0.12 / day + 1.4 / day));
        assert!((params.pipe_decay(r) - expected).abs() < 1e-18);
        assert_eq!(params.tank_decay(), 0.55 / day);
    }
}
