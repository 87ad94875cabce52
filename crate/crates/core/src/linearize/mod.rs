//! Taylor linearization of the mutual reaction around per-element operating
//! points, producing a linear model with cross-species coupling blocks and a
//! constant forcing vector.
//!
//! The bilinear site update `alpha * c * c_tilde` linearizes to
//! `alpha * (c_tilde_o * c + c_o * c_tilde - c_o * c_tilde_o)`; the two
//! linear terms land on the species diagonal and cross blocks of `A`, the
//! constant lands on the always-one input channel. Operating points are
//! refreshed on a moving window, early after the start, and on events
//! (hydraulic change, control action, threshold breach).

use nalgebra::DVector;
use thiserror::Error;

use crate::dynamics::{FullOrderModel, ModelSlice};
use crate::network::StateIndexMap;
use crate::sparse::Triplets;

#[derive(Debug, Error)]
pub enum LinearizeError {
    #[error("operating schedule leaves window starting at {start_s} s uncovered (first window must start at 0)")]
    ScheduleGap { start_s: f64 },
    #[error("operating schedule has {got} sites, model has {expected}")]
    SiteMismatch { expected: usize, got: usize },
    #[error("model carries no bilinear term; nothing to linearize")]
    NotBilinear,
}

/// Linearization of `R = -k_r c c_tilde` around `(c_o, c_tilde_o)`, in rate
/// form (per second, before the time-step and volume scaling).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionLinearization {
    /// Coefficient on the species' own concentration: `-k_r c_tilde_o`.
    pub coef_self: f64,
    /// Coefficient on the other species' concentration: `-k_r c_o`.
    pub coef_other: f64,
    /// Constant term: `+k_r c_o c_tilde_o`.
    pub constant: f64,
}

/// First-order Taylor expansion of the mutual reaction rate.
pub fn linearize_reaction(c_o: f64, c_tilde_o: f64, k_r: f64) -> ReactionLinearization {
    ReactionLinearization {
        coef_self: -k_r * c_tilde_o,
        coef_other: -k_r * c_o,
        constant: k_r * c_o * c_tilde_o,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OperatingPoint {
    pub c_o: f64,
    pub c_tilde_o: f64,
}

/// Refresh policy: moving window, an early first refresh, and an
/// event-triggered threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpUpdatePolicy {
    pub window_s: f64,
    pub early_update_delay_s: f64,
    pub threshold_mg_l: f64,
}

impl Default for OpUpdatePolicy {
    fn default() -> Self {
        Self {
            window_s: 3600.0,
            early_update_delay_s: 300.0,
            threshold_mg_l: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleWindow {
    pub start_s: f64,
    /// One operating point per reaction site, in site order.
    pub ops: Vec<OperatingPoint>,
}

/// Per-element operating points over the horizon, as a sequence of windows
/// tiling `[0, horizon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingSchedule {
    pub policy: OpUpdatePolicy,
    windows: Vec<ScheduleWindow>,
}

impl OperatingSchedule {
    pub fn new(policy: OpUpdatePolicy, windows: Vec<ScheduleWindow>) -> Result<Self, LinearizeError> {
        match windows.first() {
            None => Err(LinearizeError::ScheduleGap { start_s: 0.0 }),
            Some(w) if w.start_s != 0.0 => Err(LinearizeError::ScheduleGap { start_s: 0.0 }),
            Some(_) => Ok(Self { policy, windows }),
        }
    }

    /// One fixed operating point for every site.
    pub fn constant(policy: OpUpdatePolicy, n_sites: usize, op: OperatingPoint) -> Self {
        Self {
            policy,
            windows: vec![ScheduleWindow {
                start_s: 0.0,
                ops: vec![op; n_sites],
            }],
        }
    }

    /// All-zero operating points: the mutual reaction drops out entirely.
    pub fn zero(policy: OpUpdatePolicy, n_sites: usize) -> Self {
        Self::constant(policy, n_sites, OperatingPoint::default())
    }

    pub fn windows(&self) -> &[ScheduleWindow] {
        &self.windows
    }

    pub fn n_sites(&self) -> usize {
        self.windows.first().map(|w| w.ops.len()).unwrap_or(0)
    }

    /// Window in effect at time `t`.
    pub fn window_at(&self, t_s: f64) -> &ScheduleWindow {
        let idx = self
            .windows
            .iter()
            .rposition(|w| w.start_s <= t_s + 1e-9)
            .unwrap_or(0);
        &self.windows[idx]
    }

    /// Whether any site deviates from its operating point by more than the
    /// policy threshold (either species).
    pub fn threshold_breached(&self, t_s: f64, site_concentrations: &[(f64, f64)]) -> bool {
        let w = self.window_at(t_s);
        w.ops
            .iter()
            .zip(site_concentrations)
            .any(|(op, &(c, ct))| {
                (c - op.c_o).abs() > self.policy.threshold_mg_l
                    || (ct - op.c_tilde_o).abs() > self.policy.threshold_mg_l
            })
    }

    /// Scheduled refresh instants implied by the policy alone: the early
    /// update, then every window length.
    pub fn planned_refresh_times(&self, horizon_s: f64) -> Vec<f64> {
        let mut times = vec![self.policy.early_update_delay_s];
        let mut t = self.policy.window_s;
        while t < horizon_s {
            times.push(t);
            t += self.policy.window_s;
        }
        times
    }
}

/// Per-element concentrations at the reaction sites of a stacked state.
pub fn site_concentrations(map: &StateIndexMap, x: &DVector<f64>) -> Vec<(f64, f64)> {
    let n = map.n();
    map.reaction_sites()
        .iter()
        .map(|s| (x[s.state], x[n + s.state]))
        .collect()
}

/// Append a refresh window at `t_now` with operating points taken from the
/// current state. Unchanged operating points make this a no-op.
pub fn update_operating_points(
    schedule: &OperatingSchedule,
    map: &StateIndexMap,
    x_now: &DVector<f64>,
    t_now_s: f64,
) -> OperatingSchedule {
    let ops: Vec<OperatingPoint> = site_concentrations(map, x_now)
        .into_iter()
        .map(|(c, ct)| OperatingPoint {
            c_o: c,
            c_tilde_o: ct,
        })
        .collect();
    let mut out = schedule.clone();
    if out.windows.last().map(|w| &w.ops) == Some(&ops) {
        return out;
    }
    // A refresh at an existing start replaces that window.
    if let Some(last) = out.windows.last_mut() {
        if (last.start_s - t_now_s).abs() < 1e-9 {
            last.ops = ops;
            return out;
        }
    }
    out.windows.push(ScheduleWindow { start_s: t_now_s, ops });
    out
}

/// A full-order model whose mutual reaction has been replaced by its Taylor
/// expansion; the constant vector rides the always-one input channel.
#[derive(Debug, Clone)]
pub struct LinearizedModel {
    pub model: FullOrderModel,
    pub schedule: OperatingSchedule,
}

/// Distribute the linearization terms of each window into the model slices.
///
/// Slice boundaries are the union of hydraulic steps and schedule windows.
/// Consecutive windows with identical operating points share slices, so a
/// refresh that changes nothing costs nothing.
pub fn build_ldes(
    base: &FullOrderModel,
    schedule: &OperatingSchedule,
) -> Result<LinearizedModel, LinearizeError> {
    if !base.slices.iter().all(|s| s.f.is_some()) {
        return Err(LinearizeError::NotBilinear);
    }
    let sites = base.map.reaction_sites().len();
    if schedule.n_sites() != sites {
        return Err(LinearizeError::SiteMismatch {
            expected: sites,
            got: schedule.n_sites(),
        });
    }
    if schedule.windows().first().map(|w| w.start_s) != Some(0.0) {
        return Err(LinearizeError::ScheduleGap { start_s: 0.0 });
    }

    let n_steps = base.n_steps();
    let dt = base.dt_s;
    let mut slices: Vec<ModelSlice> = Vec::new();
    let mut slice_of_step = Vec::with_capacity(n_steps);
    let mut cache: std::collections::HashMap<(usize, usize), usize> =
        std::collections::HashMap::new();
    for k in 0..n_steps {
        let hyd = base.slice_of_step[k];
        let t = k as f64 * dt;
        let win = schedule
            .windows()
            .iter()
            .rposition(|w| w.start_s <= t + 1e-9)
            .unwrap_or(0);
        // Windows with identical operating points share slices.
        let canonical = (0..=win)
            .rev()
            .take_while(|&w| schedule.windows()[w].ops == schedule.windows()[win].ops)
            .last()
            .unwrap_or(win);
        let next_index = slices.len();
        let idx = *cache.entry((hyd, canonical)).or_insert_with(|| {
            slices.push(linearize_slice(
                &base.slices[hyd],
                &schedule.windows()[win].ops,
                base,
            ));
            next_index
        });
        slice_of_step.push(idx);
    }

    let model = FullOrderModel {
        slices,
        slice_of_step,
        dt_s: base.dt_s,
        scheme: base.scheme,
        reaction_kind: base.reaction_kind,
        map: base.map.clone(),
        n_u1: base.n_u1,
        n_u2: base.n_u2,
        const_channel: true,
        n_y1: base.n_y1,
        n_y2: base.n_y2,
        shift: base.shift.clone(),
    };
    Ok(LinearizedModel {
        model,
        schedule: schedule.clone(),
    })
}

fn linearize_slice(base: &ModelSlice, ops: &[OperatingPoint], model: &FullOrderModel) -> ModelSlice {
    let dim = model.n();
    let n_real = model.n_u_real();
    let had_const = model.const_channel;
    let f = base.f.as_ref().expect("bilinear slice");

    let mut ta = Triplets::new(dim, dim);
    for i in 0..dim {
        for (j, v) in base.a.row(i) {
            ta.push(i, j, v);
        }
    }
    let mut phi = DVector::zeros(dim);
    for (entry, op) in f.entries.iter().zip(ops) {
        // entry.alpha already carries -k_r dt and the tank volume ratio, so
        // the expansion terms reuse it directly.
        let da_self = entry.alpha * op.c_tilde_o;
        let da_other = entry.alpha * op.c_o;
        let constant = -entry.alpha * op.c_o * op.c_tilde_o;
        ta.push(entry.i1, entry.i1, da_self);
        ta.push(entry.i1, entry.i2, da_other);
        ta.push(entry.i2, entry.i1, da_self);
        ta.push(entry.i2, entry.i2, da_other);
        phi[entry.i1] += constant;
        phi[entry.i2] += constant;
    }

    let mut tb = Triplets::new(dim, n_real + 1);
    for i in 0..dim {
        for (j, v) in base.b.row(i) {
            if had_const && j == n_real {
                phi[i] += v;
            } else {
                tb.push(i, j, v);
            }
        }
    }
    for i in 0..dim {
        tb.push(i, n_real, phi[i]);
    }

    let n_y = base.c.nrows();
    let mut td = Triplets::new(n_y, n_real + 1);
    for i in 0..n_y {
        for (j, v) in base.d.row(i) {
            td.push(i, j, v);
        }
    }

    ModelSlice {
        e: base.e.clone(),
        a: ta.build(),
        b: tb.build(),
        c: base.c.clone(),
        d: td.build(),
        f: None,
        courant: base.courant.clone(),
        factor: base.factor.clone(),
    }
}
