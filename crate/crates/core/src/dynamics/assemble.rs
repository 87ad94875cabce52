//! Per-hydraulic-step assembly of the state-space matrices.
//!
//! Row semantics, per species:
//! * reservoirs hold their concentration;
//! * pumps and valves take the concentration of their upstream node;
//! * junctions mix inflows flow-weighted, with booster mass injected into
//!   the balance numerator;
//! * tanks follow the completely-stirred reactor update with the volumes
//!   frozen at the start of the hydraulic step;
//! * pipe segments follow the explicit or implicit upwind update, with the
//!   first-order decay evaluated at the old time in both schemes.
//!
//! Upstream adjacency is re-derived from the signed velocities of each
//! hydraulic step, so flow reversals re-orient rows without re-indexing.

use std::sync::Arc;

use rayon::prelude::*;

use crate::network::{
    DeviceLayout, HydraulicProfile, LinkStates, NetworkGraph, ReactionKind,
    ScenarioConfig, Scheme, SegmentationPlan, StateElement, StateIndexMap,
};
use crate::sparse::{CsrMatrix, Triplets, UpstreamFactor};

use super::model::{BilinearEntry, FullOrderModel, ModelSlice, NonlinearTerm};
use super::ModelError;

/// mg/min -> mg/s.
const MASS_RATE: f64 = 1.0 / 60.0;

/// State index of the element that feeds `node` through `link`, given the
/// signed flow (positive in file orientation).
fn feeding_state(map: &StateIndexMap, link: usize, flow: f64, node_is_to: bool) -> usize {
    match map.link_states(link) {
        LinkStates::Single(s) => s,
        LinkStates::Segments { first, count } => {
            // Water enters the node from the segment at the node's end.
            debug_assert!(node_is_to == (flow >= 0.0));
            if flow >= 0.0 {
                first + count - 1
            } else {
                first
            }
        }
    }
}

/// Assemble the matrices for one hydraulic step.
pub fn assemble(
    graph: &NetworkGraph,
    plan: &SegmentationPlan,
    layout: &DeviceLayout,
    scenario: &ScenarioConfig,
    profile: &HydraulicProfile,
    hyd_step: usize,
) -> Result<ModelSlice, ModelError> {
    let map = crate::network::state_index_map(graph, plan);
    assemble_with_map(graph, plan, layout, scenario, profile, hyd_step, &map)
}

fn assemble_with_map(
    graph: &NetworkGraph,
    plan: &SegmentationPlan,
    layout: &DeviceLayout,
    scenario: &ScenarioConfig,
    profile: &HydraulicProfile,
    hyd_step: usize,
    map: &StateIndexMap,
) -> Result<ModelSlice, ModelError> {
    let n = map.n();
    let dim = 2 * n;
    let dt = scenario.dt_s;
    let scheme = scenario.scheme;
    let reaction = &scenario.reaction;
    let k_r = reaction.mutual_rate();
    let step = &profile.steps[hyd_step];

    let n_u1 = layout.n_u1();
    let n_u2 = layout.n_u2();
    let const_channel = reaction.kind == ReactionKind::M2;
    let n_u = n_u1 + n_u2 + usize::from(const_channel);
    let const_col = n_u1 + n_u2;

    let mut ta = Triplets::new(dim, dim);
    let mut te = Triplets::new(dim, dim);
    let mut tb = Triplets::new(dim, n_u);
    let mut entries = Vec::with_capacity(map.reaction_sites().len());
    let mut courant = vec![0.0; plan.pipes.len()];

    let booster_col = |node: usize| layout.boosters.iter().position(|&b| b == node);
    let intrusion_col = |node: usize| {
        layout
            .intrusion_points
            .iter()
            .position(|&b| b == node)
            .map(|p| n_u1 + p)
    };

    // Sum of flows leaving a node, by current sign.
    let outflow = |node: usize| -> f64 {
        let mut out = 0.0;
        for (i, l) in graph.links().iter().enumerate() {
            let q = step.flow_l_s[i];
            if l.from == node && q > 0.0 {
                out += q;
            }
            if l.to == node && q < 0.0 {
                out += -q;
            }
        }
        out
    };
    // Inflowing links as (feeding state, |q|).
    let inflows = |node: usize| -> Vec<(usize, f64)> {
        let mut list = Vec::new();
        for (i, l) in graph.links().iter().enumerate() {
            let q = step.flow_l_s[i];
            if l.to == node && q > 0.0 {
                list.push((feeding_state(map, i, q, true), q));
            }
            if l.from == node && q < 0.0 {
                list.push((feeding_state(map, i, q, false), -q));
            }
        }
        list
    };

    for state in 0..n {
        match map.element(state) {
            StateElement::Reservoir { .. } => {
                for sp in 0..2 {
                    let row = state + sp * n;
                    ta.push(row, row, 1.0);
                    te.push(row, row, 1.0);
                }
            }
            StateElement::Pump { link } | StateElement::Valve { link } => {
                let l = &graph.links()[link];
                let upstream_node = if step.flow_l_s[link] >= 0.0 { l.from } else { l.to };
                let up = map.node_state(upstream_node);
                for sp in 0..2 {
                    let row = state + sp * n;
                    let up_row = up + sp * n;
                    te.push(row, row, 1.0);
                    match scheme {
                        Scheme::ExplicitUpwind => ta.push(row, up_row, 1.0),
                        Scheme::ImplicitUpwind => te.push(row, up_row, -1.0),
                    }
                }
            }
            StateElement::Junction { node } => {
                let den = step.demand_l_s[node] + outflow(node);
                if den <= 1e-12 {
                    return Err(ModelError::DegenerateJunction {
                        node: graph.nodes()[node].id.clone(),
                    });
                }
                let ins = inflows(node);
                for sp in 0..2 {
                    let row = state + sp * n;
                    te.push(row, row, 1.0);
                    for &(src, q) in &ins {
                        let w = q / den;
                        match scheme {
                            Scheme::ExplicitUpwind => ta.push(row, src + sp * n, w),
                            Scheme::ImplicitUpwind => te.push(row, src + sp * n, -w),
                        }
                    }
                }
                if let Some(col) = booster_col(node) {
                    tb.push(state, col, MASS_RATE / den);
                }
                if let Some(col) = intrusion_col(node) {
                    tb.push(state + n, col, MASS_RATE / den);
                }
            }
            StateElement::Tank { node } => {
                let v_t = step.tank_volume_l[graph.tank_ordinal(node).expect("tank")];
                let net = profile.net_link_inflow_l_s(graph, hyd_step, node)
                    + step.booster_flow_l_s[node];
                let v_n = v_t + net * dt;
                if v_t <= 0.0 || v_n <= 0.0 {
                    return Err(ModelError::Internal(format!(
                        "tank '{}' volume nonpositive within hydraulic step {hyd_step}",
                        graph.nodes()[node].id
                    )));
                }
                let q_out = outflow(node);
                let ins = inflows(node);
                for sp in 0..2 {
                    let row = state + sp * n;
                    te.push(row, row, 1.0);
                    let decay = if sp == 0 { reaction.tank_decay() } else { 0.0 };
                    let self_coef = (v_t - q_out * dt - decay * dt * v_t) / v_n;
                    ta.push(row, row, self_coef);
                    for &(src, q) in &ins {
                        ta.push(row, src + sp * n, q * dt / v_n);
                    }
                }
                if let Some(col) = booster_col(node) {
                    tb.push(state, col, MASS_RATE * dt / v_n);
                }
                if let Some(col) = intrusion_col(node) {
                    tb.push(state + n, col, MASS_RATE * dt / v_n);
                }
                if const_channel {
                    // Stable-component floor: R = -k (c - c_L).
                    tb.push(state, const_col, reaction.tank_decay() * reaction.c_l * dt * v_t / v_n);
                }
                if k_r > 0.0 || reaction.kind.is_bilinear() {
                    entries.push(BilinearEntry {
                        i1: state,
                        i2: state + n,
                        alpha: -k_r * dt * v_t / v_n,
                    });
                }
            }
            StateElement::PipeSegment { link, seg } => {
                let l = &graph.links()[link];
                let pipe = plan.for_link(link).expect("segmented pipe");
                let ordinal = graph.pipe_ordinal(link).expect("pipe ordinal");
                let v = step.velocity_m_s[link];
                let lambda = v.abs() * dt / pipe.dx_m;
                if seg == 0 {
                    courant[ordinal] = lambda;
                }
                if scheme == Scheme::ExplicitUpwind && lambda > 1.0 + 1e-12 {
                    return Err(ModelError::CflViolation {
                        pipe: l.id.clone(),
                        lambda,
                    });
                }
                // Upstream neighbour under the current flow direction.
                let up = if v >= 0.0 {
                    if seg == 0 {
                        map.node_state(l.from)
                    } else {
                        state - 1
                    }
                } else if seg + 1 == pipe.count {
                    map.node_state(l.to)
                } else {
                    state + 1
                };
                let radius = l.radius_m.expect("pipe radius");
                for sp in 0..2 {
                    let row = state + sp * n;
                    let up_row = up + sp * n;
                    let decay = if sp == 0 { reaction.pipe_decay(radius) } else { 0.0 };
                    match scheme {
                        Scheme::ExplicitUpwind => {
                            te.push(row, row, 1.0);
                            ta.push(row, row, 1.0 - lambda - decay * dt);
                            if lambda > 0.0 {
                                ta.push(row, up_row, lambda);
                            }
                        }
                        Scheme::ImplicitUpwind => {
                            te.push(row, row, 1.0 + lambda);
                            if lambda > 0.0 {
                                te.push(row, up_row, -lambda);
                            }
                            ta.push(row, row, 1.0 - decay * dt);
                        }
                    }
                }
                if const_channel {
                    tb.push(
                        state,
                        const_col,
                        reaction.pipe_decay(radius) * reaction.c_l * dt,
                    );
                }
                if k_r > 0.0 || reaction.kind.is_bilinear() {
                    entries.push(BilinearEntry {
                        i1: state,
                        i2: state + n,
                        alpha: -k_r * dt,
                    });
                }
            }
        }
    }

    // Sensor rows: chlorine block first, then the evaluation-only reactant block.
    let n_y = layout.n_y1() + layout.n_y2();
    let mut tc = Triplets::new(n_y, dim);
    for (r, &node) in layout.chlorine_sensors.iter().enumerate() {
        tc.push(r, map.node_state(node), 1.0);
    }
    for (r, &node) in layout.reactant_sensors.iter().enumerate() {
        tc.push(layout.n_y1() + r, map.node_state(node) + n, 1.0);
    }

    let e = te.build();
    let factor = match scheme {
        Scheme::ExplicitUpwind => None,
        Scheme::ImplicitUpwind => Some(UpstreamFactor::analyze(&e)?),
    };

    Ok(ModelSlice {
        e,
        a: ta.build(),
        b: tb.build(),
        c: tc.build(),
        d: CsrMatrix::zeros(n_y, n_u),
        f: reaction
            .kind
            .is_bilinear()
            .then_some(NonlinearTerm { dim, entries }),
        courant,
        factor,
    })
}

/// Assemble the whole model: one slice per hydraulic step over the horizon.
pub fn assemble_model(
    graph: &NetworkGraph,
    plan: &SegmentationPlan,
    layout: &DeviceLayout,
    scenario: &ScenarioConfig,
    profile: &HydraulicProfile,
) -> Result<FullOrderModel, ModelError> {
    let map = Arc::new(crate::network::state_index_map(graph, plan));
    let n_steps = scenario.n_wq_steps();
    let per_slice = scenario.steps_per_hydraulic();
    let n_slices = (n_steps.div_ceil(per_slice)).min(profile.steps.len()).max(1);

    let slices: Vec<ModelSlice> = (0..n_slices)
        .into_par_iter()
        .map(|k| assemble_with_map(graph, plan, layout, scenario, profile, k, &map))
        .collect::<Result<_, _>>()?;

    let slice_of_step = (0..n_steps).map(|k| (k / per_slice).min(n_slices - 1)).collect();

    Ok(FullOrderModel {
        slices,
        slice_of_step,
        dt_s: scenario.dt_s,
        scheme: scenario.scheme,
        reaction_kind: scenario.reaction.kind,
        map,
        n_u1: layout.n_u1(),
        n_u2: layout.n_u2(),
        const_channel: scenario.reaction.kind == ReactionKind::M2,
        n_y1: layout.n_y1(),
        n_y2: layout.n_y2(),
        shift: None,
    })
}
