//! Hydraulic profiles: per-step link velocities/flows, demands, booster
//! flows, and tank volumes, with the balance diagnostics.

use nalgebra::DVector;

use super::graph::{LinkKind, NetworkGraph, NodeKind};
use super::NetworkError;

/// Hydraulic state over the simulation period, one entry per hydraulic step.
///
/// Flows are signed in file orientation: positive means `from -> to`.
/// Internal units: velocity m/s, flow L/s, demand L/s, volume L.
#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicProfile {
    pub step_s: f64,
    pub steps: Vec<HydraulicStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicStep {
    /// Per link, file order.
    pub velocity_m_s: Vec<f64>,
    /// Per link, file order.
    pub flow_l_s: Vec<f64>,
    /// Per node, file order; nonzero only at junctions.
    pub demand_l_s: Vec<f64>,
    /// Per node, file order; booster injection flow.
    pub booster_flow_l_s: Vec<f64>,
    /// Per tank ordinal.
    pub tank_volume_l: Vec<f64>,
}

impl HydraulicProfile {
    /// Signed inflow sum into `node` at `step` (positive into the node),
    /// excluding demand and booster flow.
    pub fn net_link_inflow_l_s(&self, graph: &NetworkGraph, step: usize, node: usize) -> f64 {
        let mut net = 0.0;
        for (i, l) in graph.links().iter().enumerate() {
            let q = self.steps[step].flow_l_s[i];
            if l.to == node {
                net += q;
            }
            if l.from == node {
                net -= q;
            }
        }
        net
    }

    /// Tank volume at an offset (seconds) into a hydraulic step, linear in
    /// the net inflow.
    pub fn tank_volume_at(
        &self,
        graph: &NetworkGraph,
        step: usize,
        tank_node: usize,
        offset_s: f64,
    ) -> f64 {
        let ordinal = graph.tank_ordinal(tank_node).expect("tank node");
        let v0 = self.steps[step].tank_volume_l[ordinal];
        let net = self.net_link_inflow_l_s(graph, step, tank_node)
            + self.steps[step].booster_flow_l_s[tank_node];
        v0 + net * offset_s
    }

    /// Hydraulic step index covering simulation time `t_s`, clamped to the
    /// last available step.
    pub fn step_at(&self, t_s: f64) -> usize {
        if self.steps.is_empty() {
            return 0;
        }
        ((t_s / self.step_s).floor() as usize).min(self.steps.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    FlowImbalance,
    VolumeInconsistent,
    NonpositiveVolume,
}

#[derive(Debug, Clone)]
pub struct HydraulicDiagnostic {
    pub kind: ViolationKind,
    pub element: String,
    pub step: usize,
    /// Imbalance in L/s for flows, L for volumes.
    pub residual: f64,
}

impl std::fmt::Display for HydraulicDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let what = match self.kind {
            ViolationKind::FlowImbalance => "flow imbalance",
            ViolationKind::VolumeInconsistent => "volume inconsistent with net inflow",
            ViolationKind::NonpositiveVolume => "nonpositive volume",
        };
        write!(
            f,
            "{what} at {} (step {}): residual {:.6e}",
            self.element, self.step, self.residual
        )
    }
}

const BALANCE_RTOL: f64 = 1e-6;

/// Check flow balance at junctions and volume consistency at tanks.
///
/// Returns an empty list iff the profile satisfies both invariants at every
/// step; violations are diagnostics, not errors.
pub fn validate_hydraulics(
    graph: &NetworkGraph,
    profile: &HydraulicProfile,
) -> Vec<HydraulicDiagnostic> {
    let mut out = Vec::new();
    for (k, step) in profile.steps.iter().enumerate() {
        for (n, node) in graph.nodes().iter().enumerate() {
            match node.kind {
                NodeKind::Junction => {
                    let mut inflow = 0.0;
                    let mut outflow = 0.0;
                    for (i, l) in graph.links().iter().enumerate() {
                        let q = step.flow_l_s[i];
                        if l.to == n {
                            if q >= 0.0 {
                                inflow += q;
                            } else {
                                outflow += -q;
                            }
                        }
                        if l.from == n {
                            if q >= 0.0 {
                                outflow += q;
                            } else {
                                inflow += -q;
                            }
                        }
                    }
                    let residual = inflow + step.booster_flow_l_s[n] - step.demand_l_s[n] - outflow;
                    let scale = inflow
                        .max(outflow)
                        .max(step.demand_l_s[n].abs())
                        .max(1e-9);
                    if residual.abs() > BALANCE_RTOL * scale {
                        out.push(HydraulicDiagnostic {
                            kind: ViolationKind::FlowImbalance,
                            element: node.id.clone(),
                            step: k,
                            residual,
                        });
                    }
                }
                NodeKind::Tank => {
                    let ordinal = graph.tank_ordinal(n).expect("tank ordinal");
                    let v = step.tank_volume_l[ordinal];
                    if v <= 0.0 {
                        out.push(HydraulicDiagnostic {
                            kind: ViolationKind::NonpositiveVolume,
                            element: node.id.clone(),
                            step: k,
                            residual: v,
                        });
                    }
                    if k + 1 < profile.steps.len() {
                        let v_next = profile.steps[k + 1].tank_volume_l[ordinal];
                        let net = profile.net_link_inflow_l_s(graph, k, n)
                            + step.booster_flow_l_s[n];
                        let expected = v + net * profile.step_s;
                        let scale = v.abs().max(expected.abs()).max(1.0);
                        if (v_next - expected).abs() > BALANCE_RTOL * scale {
                            out.push(HydraulicDiagnostic {
                                kind: ViolationKind::VolumeInconsistent,
                                element: node.id.clone(),
                                step: k,
                                residual: v_next - expected,
                            });
                        }
                    }
                }
                NodeKind::Reservoir => {}
            }
        }
    }
    out
}

/// Parse the hydraulics CSV (`step,element_id,velocity,flow,demand,volume`,
/// SI units: m/s, m^3/s, m^3) against a known graph.
///
/// Row conventions: link rows carry velocity (pipes; optional for pumps and
/// valves) and flow; junction rows carry demand and optionally a booster
/// flow in the `flow` column; tank rows carry volume and optionally a
/// booster flow. Missing junction rows default to zero demand. Tank volume
/// rows are required at every step.
pub fn parse_hydraulics(
    text: &str,
    graph: &NetworkGraph,
    step_s: f64,
) -> Result<HydraulicProfile, NetworkError> {
    if step_s <= 0.0 {
        return Err(NetworkError::Hydraulics {
            message: "hydraulic step duration must be positive".to_string(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| NetworkError::Hydraulics {
            message: format!("cannot read header: {e}"),
        })?
        .clone();
    let expected = ["step", "element_id", "velocity", "flow", "demand", "volume"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(NetworkError::Hydraulics {
            message: format!("header must be `{}`", expected.join(",")),
        });
    }

    struct Raw {
        step: usize,
        element: String,
        velocity: Option<f64>,
        flow: Option<f64>,
        demand: Option<f64>,
        volume: Option<f64>,
    }
    let parse_opt = |field: &str, line: u64, what: &str| -> Result<Option<f64>, NetworkError> {
        if field.is_empty() {
            return Ok(None);
        }
        field
            .parse::<f64>()
            .map(Some)
            .map_err(|_| NetworkError::Hydraulics {
                message: format!("line {line}: bad {what} value '{field}'"),
            })
    };

    let mut rows = Vec::new();
    let mut max_step = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| NetworkError::Hydraulics {
            message: format!("csv error: {e}"),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let step: usize = record[0].parse().map_err(|_| NetworkError::Hydraulics {
            message: format!("line {line}: bad step index '{}'", &record[0]),
        })?;
        max_step = max_step.max(step);
        rows.push(Raw {
            step,
            element: record[1].to_string(),
            velocity: parse_opt(&record[2], line, "velocity")?,
            flow: parse_opt(&record[3], line, "flow")?,
            demand: parse_opt(&record[4], line, "demand")?,
            volume: parse_opt(&record[5], line, "volume")?,
        });
    }
    if rows.is_empty() {
        return Err(NetworkError::Hydraulics {
            message: "profile covers no hydraulic steps".to_string(),
        });
    }

    let n_nodes = graph.nodes().len();
    let n_links = graph.links().len();
    let n_tanks = graph.count_nodes(NodeKind::Tank);
    let mut steps: Vec<HydraulicStep> = (0..=max_step)
        .map(|_| HydraulicStep {
            velocity_m_s: vec![f64::NAN; n_links],
            flow_l_s: vec![f64::NAN; n_links],
            demand_l_s: vec![0.0; n_nodes],
            booster_flow_l_s: vec![0.0; n_nodes],
            tank_volume_l: vec![f64::NAN; n_tanks],
        })
        .collect();

    for row in rows {
        let step = &mut steps[row.step];
        if let Ok(li) = graph.link_index(&row.element) {
            let flow_m3 = row.flow.ok_or_else(|| NetworkError::Hydraulics {
                message: format!("link '{}' row (step {}) is missing flow", row.element, row.step),
            })?;
            step.flow_l_s[li] = flow_m3 * 1000.0;
            let velocity = match (row.velocity, graph.links()[li].kind) {
                (Some(v), _) => v,
                // Pumps/valves carry no transport delay; only the sign matters.
                (None, LinkKind::Pump | LinkKind::Valve) => flow_m3.signum(),
                (None, LinkKind::Pipe) => {
                    return Err(NetworkError::Hydraulics {
                        message: format!(
                            "pipe '{}' row (step {}) is missing velocity",
                            row.element, row.step
                        ),
                    })
                }
            };
            step.velocity_m_s[li] = velocity;
        } else if let Ok(ni) = graph.node_index(&row.element) {
            match graph.nodes()[ni].kind {
                NodeKind::Junction => {
                    step.demand_l_s[ni] = row.demand.unwrap_or(0.0) * 1000.0;
                    step.booster_flow_l_s[ni] = row.flow.unwrap_or(0.0) * 1000.0;
                }
                NodeKind::Tank => {
                    let ordinal = graph.tank_ordinal(ni).expect("tank");
                    let v = row.volume.ok_or_else(|| NetworkError::Hydraulics {
                        message: format!(
                            "tank '{}' row (step {}) is missing volume",
                            row.element, row.step
                        ),
                    })?;
                    step.tank_volume_l[ordinal] = v * 1000.0;
                    step.booster_flow_l_s[ni] = row.flow.unwrap_or(0.0) * 1000.0;
                }
                NodeKind::Reservoir => {}
            }
        } else {
            return Err(NetworkError::UnknownElement { id: row.element });
        }
    }

    for (k, step) in steps.iter().enumerate() {
        for (i, l) in graph.links().iter().enumerate() {
            if step.flow_l_s[i].is_nan() || step.velocity_m_s[i].is_nan() {
                return Err(NetworkError::Hydraulics {
                    message: format!("link '{}' has no row at step {k}", l.id),
                });
            }
        }
        for (n, node) in graph.nodes().iter().enumerate() {
            if node.kind == NodeKind::Tank {
                let ordinal = graph.tank_ordinal(n).expect("tank");
                if step.tank_volume_l[ordinal].is_nan() {
                    return Err(NetworkError::Hydraulics {
                        message: format!("tank '{}' has no volume at step {k}", node.id),
                    });
                }
            }
        }
    }

    Ok(HydraulicProfile { step_s, steps })
}

/// Convenience: constant hydraulics with tank volumes rolled forward from
/// their initial values so the consistency invariant holds exactly.
pub fn constant_profile(
    graph: &NetworkGraph,
    step_s: f64,
    n_steps: usize,
    velocity_m_s: &DVector<f64>,
    flow_l_s: &DVector<f64>,
    demand_l_s: &DVector<f64>,
) -> HydraulicProfile {
    let n_tanks = graph.count_nodes(NodeKind::Tank);
    let mut volumes = vec![0.0; n_tanks];
    for (n, node) in graph.nodes().iter().enumerate() {
        if let Some(ord) = graph.tank_ordinal(n) {
            volumes[ord] = node.initial_volume_l.expect("tank volume");
        }
    }
    let mut net_per_tank = vec![0.0; n_tanks];
    for (n, _) in graph.nodes().iter().enumerate() {
        if let Some(ord) = graph.tank_ordinal(n) {
            for (i, l) in graph.links().iter().enumerate() {
                if l.to == n {
                    net_per_tank[ord] += flow_l_s[i];
                }
                if l.from == n {
                    net_per_tank[ord] -= flow_l_s[i];
                }
            }
        }
    }
    let mut steps = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        steps.push(HydraulicStep {
            velocity_m_s: velocity_m_s.iter().copied().collect(),
            flow_l_s: flow_l_s.iter().copied().collect(),
            demand_l_s: demand_l_s.iter().copied().collect(),
            booster_flow_l_s: vec![0.0; graph.nodes().len()],
            tank_volume_l: volumes.clone(),
        });
        for (ord, net) in net_per_tank.iter().enumerate() {
            volumes[ord] += net * step_s;
        }
    }
    HydraulicProfile { step_s, steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::graph::parse_network;

    fn balanced_csv() -> String {
        let mut s = String::from("step,element_id,velocity,flow,demand,volume\n");
        // pump 0.145664 m3/s into J1, demand 0.02, pipe 0.125664 to TK1
        for step in 0..2 {
            let vol = 500.0 + 0.125_664 * 600.0 * step as f64;
            s.push_str(&format!("{step},PM1,,0.145664,,\n"));
            s.push_str(&format!("{step},P1,1.0,0.125664,,\n"));
            s.push_str(&format!("{step},J1,,,0.02,\n"));
            s.push_str(&format!("{step},TK1,,,,{vol}\n"));
        }
        s
    }

    #[test]
    fn balanced_profile_has_no_diagnostics() {
        let g = parse_network(crate::network::graph::tests::THREE_NODE).unwrap();
        let p = parse_hydraulics(&balanced_csv(), &g, 600.0).unwrap();
        assert_eq!(p.steps.len(), 2);
        assert!(validate_hydraulics(&g, &p).is_empty());
    }

    #[test]
    fn junction_imbalance_reports_residual() {
        let g = parse_network(crate::network::graph::tests::THREE_NODE).unwrap();
        // inflow 1.0, outflow 0.5, demand 0.2 -> residual 0.3 m3/s = 300 L/s
        let csv = "step,element_id,velocity,flow,demand,volume\n\
                   0,PM1,,1.0,,\n\
                   0,P1,1.0,0.5,,\n\
                   0,J1,,,0.2,\n\
                   0,TK1,,,,500.0\n";
        let p = parse_hydraulics(csv, &g, 600.0).unwrap();
        let diags = validate_hydraulics(&g, &p);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, ViolationKind::FlowImbalance);
        assert_eq!(diags[0].element, "J1");
        assert!((diags[0].residual - 300.0).abs() < 1e-9);
    }

    #[test]
    fn decreasing_volume_under_net_inflow_is_flagged() {
        let g = parse_network(crate::network::graph::tests::THREE_NODE).unwrap();
        // Forge the second-step volume downward despite net inflow.
        let csv = balanced_csv().replace(
            &format!("1,TK1,,,,{}", 500.0 + 0.125_664 * 600.0),
            "1,TK1,,,,490.0",
        );
        let p = parse_hydraulics(&csv, &g, 600.0).unwrap();
        let diags = validate_hydraulics(&g, &p);
        assert!(diags
            .iter()
            .any(|d| d.kind == ViolationKind::VolumeInconsistent && d.element == "TK1"));
    }

    #[test]
    fn unknown_element_is_rejected() {
        let g = parse_network(crate::network::graph::tests::THREE_NODE).unwrap();
        let csv = "step,element_id,velocity,flow,demand,volume\n0,NOPE,,1.0,,\n";
        assert!(matches!(
            parse_hydraulics(csv, &g, 600.0),
            Err(NetworkError::UnknownElement { .. })
        ));
    }
}
