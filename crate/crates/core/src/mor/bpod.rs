//! Balanced POD: adjoint snapshots, the block Hankel matrix, and the
//! bi-orthogonal transform pair, plus the a-priori snapshot length bound.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use tracing::warn;

use crate::dynamics::FullOrderModel;
use crate::network::{
    DeviceLayout, HydraulicProfile, LinkKind, NetworkGraph, SegmentationPlan,
};

use super::pod::TransformPair;
use super::MorError;

const SV_RTOL: f64 = 1e-12;

/// Adjoint-run options.
#[derive(Debug, Clone)]
pub struct AdjointOptions {
    /// Stacked state indices observed by the snapshot outputs. Besides the
    /// chlorine sensors this may include reactant rows at detected intrusion
    /// nodes — a snapshot-only device, never a control input.
    pub output_states: Vec<usize>,
    /// Add the constant-channel forcing term to the adjoint iteration.
    /// Off by default: the homogeneous adjoint is what the Hankel product
    /// needs; the switch exists for experimentation.
    pub include_constant_forcing: bool,
}

impl AdjointOptions {
    /// Every sensed output plus synthetic reactant rows at the intrusion
    /// points (the detected-source assumption for the otherwise unsensed
    /// species).
    pub fn for_layout(model: &FullOrderModel, layout: &DeviceLayout) -> Self {
        let n = model.map.n();
        let mut output_states: Vec<usize> = layout
            .chlorine_sensors
            .iter()
            .map(|&node| model.map.node_state(node))
            .collect();
        for &node in &layout.reactant_sensors {
            output_states.push(n + model.map.node_state(node));
        }
        for &node in &layout.intrusion_points {
            output_states.push(n + model.map.node_state(node));
        }
        output_states.sort_unstable();
        output_states.dedup();
        Self {
            output_states,
            include_constant_forcing: false,
        }
    }
}

/// Adjoint impulse snapshots `P`, output-major: for each observed state,
/// the run `p(0) = e_out`, `p(k+1) = A^T E^{-T} p(k)` over `m` steps.
///
/// Linear(ized) models only.
pub fn collect_adjoint_snapshots(
    model: &FullOrderModel,
    m: usize,
    options: &AdjointOptions,
) -> Result<DMatrix<f64>, MorError> {
    if model.slices.iter().any(|s| s.f.is_some()) {
        return Err(MorError::Setup(
            "adjoint snapshots require a linear(ized) model".into(),
        ));
    }
    if options.output_states.is_empty() {
        return Err(MorError::Setup("no outputs for adjoint snapshots".into()));
    }
    let dim = model.n();
    let blocks: Vec<Result<DMatrix<f64>, MorError>> = options
        .output_states
        .par_iter()
        .map(|&out_state| {
            let mut cols = DMatrix::zeros(dim, m);
            let mut p = DVector::zeros(dim);
            p[out_state] = 1.0;
            let mut w = DVector::zeros(dim);
            for k in 0..m {
                cols.set_column(k, &p);
                let slice = model.slice_at_step(k);
                slice.solve_e_transpose(&p, &mut w);
                let mut next = DVector::zeros(dim);
                slice.a.transpose_mul_vec_add(&w, &mut next);
                if options.include_constant_forcing && model.const_channel {
                    let phi = slice.b.column_dense(model.n_u_real());
                    slice.solve_e(&phi, &mut w);
                    next += &w;
                }
                if !next.iter().all(|v| v.is_finite()) {
                    return Err(MorError::NonFinite { step: k + 1 });
                }
                p = next;
            }
            Ok(cols)
        })
        .collect();

    let mut p = DMatrix::zeros(dim, m * options.output_states.len());
    for (i, b) in blocks.into_iter().enumerate() {
        p.columns_mut(i * m, m).copy_from(&b?);
    }
    Ok(p)
}

/// Balanced transform from the SVD of the block Hankel matrix
/// `H = P^T X`: `V_r = X Q_r S_r^{-1/2}`, `L_r = S_r^{-1/2} U_r^T P^T`,
/// bi-orthogonal by construction.
pub fn bpod_transform(
    x: &DMatrix<f64>,
    p: &DMatrix<f64>,
    n_r: usize,
) -> Result<TransformPair, MorError> {
    if x.nrows() != p.nrows() {
        return Err(MorError::DimensionMismatch {
            expected: x.nrows(),
            got: p.nrows(),
        });
    }
    let hankel = p.transpose() * x;
    let svd = hankel.svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors");
    let vt = svd.v_t.as_ref().expect("right singular vectors");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("finite singular values")
    });
    let sigma_max = svd.singular_values[order[0]].max(0.0);
    let rank = order
        .iter()
        .take_while(|&&i| svd.singular_values[i] > SV_RTOL * sigma_max)
        .count();
    if n_r > rank {
        warn!(n_r, rank, "balanced transform truncated to the Hankel numerical rank");
    }
    let kept = n_r.min(rank);
    if kept == 0 {
        return Err(MorError::RankDeficient("Hankel matrix is numerically zero".into()));
    }

    let dim = x.nrows();
    let mut v_r = DMatrix::zeros(dim, kept);
    let mut l_r = DMatrix::zeros(kept, dim);
    let mut retained = DVector::zeros(kept);
    for (k, &i) in order.iter().take(kept).enumerate() {
        let s = svd.singular_values[i];
        retained[k] = s;
        let scale = s.sqrt().recip();
        v_r.set_column(k, &(x * (vt.row(i).transpose() * scale)));
        let l_row = (u.column(i).transpose() * p.transpose()) * scale;
        l_r.set_row(k, &l_row);
    }

    // Sign convention: largest-magnitude entry of each column positive.
    for c in 0..kept {
        let mut idx = 0;
        let mut best = -1.0f64;
        for (i, &val) in v_r.column(c).iter().enumerate() {
            if val.abs() > best {
                best = val.abs();
                idx = i;
            }
        }
        if v_r[(idx, c)] < 0.0 {
            for i in 0..dim {
                v_r[(i, c)] = -v_r[(i, c)];
            }
            for j in 0..dim {
                l_r[(c, j)] = -l_r[(c, j)];
            }
        }
    }

    Ok(TransformPair { v_r, l_r, retained })
}

/// A-priori snapshot length: the worst source-to-sensor travel time along
/// the flow directions of each hydraulic step, in water-quality steps.
///
/// Travel time accumulates pipe lengths over velocities; pumps and valves
/// are instantaneous. Every (source, sensor) pair must be reachable at
/// every hydraulic step.
pub fn min_snapshot_length(
    graph: &NetworkGraph,
    plan: &SegmentationPlan,
    profile: &HydraulicProfile,
    layout: &DeviceLayout,
) -> Result<usize, MorError> {
    let dt = plan.dt_s;
    let sources: Vec<usize> = layout
        .boosters
        .iter()
        .chain(&layout.intrusion_points)
        .copied()
        .collect();
    let sensors: Vec<usize> = layout
        .chlorine_sensors
        .iter()
        .chain(&layout.reactant_sensors)
        .copied()
        .collect();
    if sources.is_empty() || sensors.is_empty() {
        return Err(MorError::Setup(
            "snapshot length bound needs at least one source and one sensor".into(),
        ));
    }

    let mut worst = 0usize;
    for (h, step) in profile.steps.iter().enumerate() {
        // Directed adjacency under this step's flow signs.
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); graph.nodes().len()];
        for (i, link) in graph.links().iter().enumerate() {
            let q = step.flow_l_s[i];
            if q == 0.0 {
                continue;
            }
            let (from, to) = if q > 0.0 {
                (link.from, link.to)
            } else {
                (link.to, link.from)
            };
            let cost = match link.kind {
                LinkKind::Pipe => {
                    let v = step.velocity_m_s[i].abs();
                    if v == 0.0 {
                        continue;
                    }
                    link.length_m.expect("pipe length") / v
                }
                LinkKind::Pump | LinkKind::Valve => 0.0,
            };
            adj[from].push((to, cost));
        }

        for &src in &sources {
            let dist = dijkstra(&adj, src);
            for &sensor in &sensors {
                if src == sensor {
                    continue;
                }
                let t = dist[sensor];
                if !t.is_finite() {
                    return Err(MorError::Unreachable {
                        origin: graph.nodes()[src].id.clone(),
                        sensor: graph.nodes()[sensor].id.clone(),
                        step: h,
                    });
                }
                worst = worst.max((t / dt).ceil() as usize);
            }
        }
    }
    Ok(worst.max(1))
}

fn dijkstra(adj: &[Vec<(usize, f64)>], src: usize) -> Vec<f64> {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[src] = 0.0;
    for _ in 0..n {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            if !done[i] && dist[i] < best_d {
                best_d = dist[i];
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        done[i] = true;
        for &(j, w) in &adj[i] {
            if dist[i] + w < dist[j] {
                dist[j] = dist[i] + w;
            }
        }
    }
    dist
}
