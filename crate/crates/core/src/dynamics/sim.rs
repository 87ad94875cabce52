//! Stepping and simulation of the full-order model.

use nalgebra::DVector;

use super::model::FullOrderModel;
use super::ModelError;

/// Real-channel input samples (`u1` then `u2`), one per water-quality step.
/// The constant channel is appended internally where a model carries one.
#[derive(Debug, Clone)]
pub struct InputSchedule {
    values: Vec<DVector<f64>>,
    n_channels: usize,
}

impl InputSchedule {
    pub fn zeros(n_channels: usize, n_steps: usize) -> Self {
        Self {
            values: vec![DVector::zeros(n_channels); n_steps],
            n_channels,
        }
    }

    pub fn constant(u: DVector<f64>, n_steps: usize) -> Self {
        Self {
            n_channels: u.len(),
            values: vec![u; n_steps],
        }
    }

    /// Zero everywhere except `magnitude` on `channel` at step 0.
    pub fn impulse(n_channels: usize, n_steps: usize, channel: usize, magnitude: f64) -> Self {
        let mut s = Self::zeros(n_channels, n_steps);
        s.values[0][channel] = magnitude;
        s
    }

    pub fn from_samples(values: Vec<DVector<f64>>) -> Self {
        let n_channels = values.first().map(|v| v.len()).unwrap_or(0);
        Self { values, n_channels }
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sample at `step`, holding the last value past the end.
    pub fn at(&self, step: usize) -> &DVector<f64> {
        &self.values[step.min(self.values.len() - 1)]
    }

    pub fn at_mut(&mut self, step: usize) -> &mut DVector<f64> {
        let last = self.values.len() - 1;
        &mut self.values[step.min(last)]
    }

    /// Add `window` of `magnitude` on `channel` over `[start, end)` steps.
    pub fn add_window(&mut self, channel: usize, magnitude: f64, start: usize, end: usize) {
        for k in start..end.min(self.values.len()) {
            self.values[k][channel] += magnitude;
        }
    }
}

/// Advance one water-quality step with a full input vector (constant channel
/// included when the model has one).
pub fn step_full(
    model: &FullOrderModel,
    step_idx: usize,
    x: &DVector<f64>,
    u_full: &DVector<f64>,
) -> Result<DVector<f64>, ModelError> {
    let dim = model.n();
    if x.len() != dim {
        return Err(ModelError::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    if u_full.len() != model.n_u_total() {
        return Err(ModelError::DimensionMismatch {
            expected: model.n_u_total(),
            got: u_full.len(),
        });
    }
    let slice = model.slice_at_step(step_idx);
    let mut rhs = DVector::zeros(dim);
    slice.a.mul_vec(x, &mut rhs);
    for (r, c, v) in iter_csr(&slice.b) {
        rhs[r] += v * u_full[c];
    }
    // The reaction term is always evaluated at the old state; under the
    // implicit scheme this is the semi-implicit right-hand side.
    if let Some(f) = &slice.f {
        f.eval_add(x, &mut rhs);
    }
    let mut out = DVector::zeros(dim);
    slice.solve_e(&rhs, &mut out);
    Ok(out)
}

fn iter_csr(m: &crate::sparse::CsrMatrix) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    (0..m.nrows()).flat_map(move |i| m.row(i).map(move |(j, v)| (i, j, v)))
}

/// Advance one water-quality step with real-channel inputs.
pub fn step(
    model: &FullOrderModel,
    step_idx: usize,
    x: &DVector<f64>,
    u_real: &DVector<f64>,
) -> Result<DVector<f64>, ModelError> {
    let u = model.full_input(u_real)?;
    step_full(model, step_idx, x, &u)
}

/// Simulated states and sensor outputs.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt_s: f64,
    /// Stride between recorded states, in steps.
    pub state_stride: usize,
    /// States at steps `0, stride, 2*stride, ...` plus the final state.
    pub states: Vec<DVector<f64>>,
    /// Outputs `y(t) = C x(t) + D u(t)` at every step `0..=n`.
    pub outputs: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.outputs.len().saturating_sub(1)
    }

    /// State at an exact recorded step; panics if the stride skipped it.
    pub fn state_at(&self, step: usize) -> &DVector<f64> {
        if step == self.n_steps() {
            return self.states.last().expect("final state recorded");
        }
        assert!(step % self.state_stride == 0, "step {step} not recorded");
        &self.states[step / self.state_stride]
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("final state recorded")
    }

    /// Output matrix with one column per step.
    pub fn output_matrix(&self) -> nalgebra::DMatrix<f64> {
        let rows = self.outputs.first().map(|y| y.len()).unwrap_or(0);
        let mut m = nalgebra::DMatrix::zeros(rows, self.outputs.len());
        for (k, y) in self.outputs.iter().enumerate() {
            m.set_column(k, y);
        }
        m
    }
}

/// Simulate `n_steps` water-quality steps from `x0`.
///
/// Outputs are recorded every step, states every `state_stride` steps (and
/// at the end). Errors from stepping carry the step index.
pub fn simulate(
    model: &FullOrderModel,
    x0: &DVector<f64>,
    inputs: &InputSchedule,
    n_steps: usize,
    state_stride: usize,
) -> Result<Trajectory, ModelError> {
    let stride = state_stride.max(1);
    if inputs.n_channels() != model.n_u_real() {
        return Err(ModelError::DimensionMismatch {
            expected: model.n_u_real(),
            got: inputs.n_channels(),
        });
    }
    let mut x = x0.clone();
    let mut states = Vec::with_capacity(n_steps / stride + 2);
    let mut outputs = Vec::with_capacity(n_steps + 1);
    let mut y = DVector::zeros(model.n_y());

    for k in 0..=n_steps {
        let u_full = model.full_input(inputs.at(k))?;
        let slice = model.slice_at_step(k.min(n_steps.saturating_sub(1)));
        slice.c.mul_vec(&x, &mut y);
        for (r, c, v) in iter_csr(&slice.d) {
            y[r] += v * u_full[c];
        }
        outputs.push(y.clone());
        if k % stride == 0 || k == n_steps {
            states.push(x.clone());
        }
        if k == n_steps {
            break;
        }
        x = step_full(model, k, &x, &u_full)?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(ModelError::NonFinite { step: k + 1 });
        }
    }

    Ok(Trajectory {
        dt_s: model.dt_s,
        state_stride: stride,
        states,
        outputs,
    })
}

/// Build the real-channel schedule for a scenario run: booster channels stay
/// zero (a controller drives them), and each intrusion event injects the
/// mass rate that lifts its junction's concentration by the event
/// concentration under the current hydraulics.
pub fn scenario_inputs(
    model: &FullOrderModel,
    graph: &crate::network::NetworkGraph,
    layout: &crate::network::DeviceLayout,
    profile: &crate::network::HydraulicProfile,
    scenario: &crate::network::ScenarioConfig,
    n_steps: usize,
) -> InputSchedule {
    let mut schedule = InputSchedule::zeros(model.n_u_real(), n_steps);
    for event in &scenario.intrusions {
        let Some(ordinal) = layout.intrusion_points.iter().position(|&p| p == event.node) else {
            continue;
        };
        let channel = model.n_u1 + ordinal;
        let start = (event.start_s / model.dt_s).round() as usize;
        let end = (event.end_s / model.dt_s).round() as usize;
        for k in start..end.min(n_steps) {
            let hyd = profile.step_at(k as f64 * model.dt_s);
            let step = &profile.steps[hyd];
            // Equivalent mass rate: concentration times the mixing denominator.
            let mut den = step.demand_l_s[event.node];
            for (i, l) in graph.links().iter().enumerate() {
                let q = step.flow_l_s[i];
                if l.from == event.node && q > 0.0 {
                    den += q;
                }
                if l.to == event.node && q < 0.0 {
                    den += -q;
                }
            }
            schedule.at_mut(k)[channel] = event.concentration_mg_l * den * 60.0;
        }
    }
    schedule
}
