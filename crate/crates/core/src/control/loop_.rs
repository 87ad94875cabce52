//! Closed loop: the nonlinear full-order plant driven by the reduced-model
//! controller, with scripted disturbances and per-step envelope audits.

use std::time::Instant;

use nalgebra::DVector;

use crate::dynamics::{step_full, FullOrderModel, InputSchedule, Trajectory};
use crate::network::{Disturbance, Species};

use super::mccormick::McCormickEnvelope;
use super::mpc::{ControlAction, Controller};
use super::qp::QpStatus;
use super::ControlError;

/// One control interval's worth of log.
#[derive(Debug, Clone)]
pub struct ClosedLoopRecord {
    pub time_s: f64,
    pub u1_mg_min: DVector<f64>,
    pub objective: f64,
    pub solve_ms: f64,
    pub kkt_primal: f64,
    pub kkt_dual: f64,
    pub iterations: usize,
    pub status: QpStatus,
    pub held_previous: bool,
}

/// Worst-case envelope diagnostics across one water-quality step.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnvelopeAudit {
    /// Largest amount by which a true product escaped its envelope while
    /// the state was inside the box.
    pub max_envelope_violation: f64,
    /// Largest amount by which the true state escaped the box itself
    /// (estimator error on the reactant ceiling).
    pub max_box_exceedance: f64,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopLog {
    pub records: Vec<ClosedLoopRecord>,
    pub trajectory: Trajectory,
    pub audits: Vec<EnvelopeAudit>,
}

impl ClosedLoopLog {
    /// Applied injection at an arbitrary simulation time.
    pub fn u_at(&self, time_s: f64) -> Option<&DVector<f64>> {
        self.records
            .iter()
            .rev()
            .find(|r| r.time_s <= time_s + 1e-9)
            .map(|r| &r.u1_mg_min)
    }
}

/// Run the plant under the controller for `n_steps` water-quality steps.
///
/// The plant is the nonlinear full-order model; the controller sees only
/// its chlorine sensor rows. Disturbances overwrite plant states at their
/// scripted steps. Every step the true bilinear products are audited
/// against the envelopes the controller last built.
pub fn closed_loop_run(
    plant: &FullOrderModel,
    x0: &DVector<f64>,
    controller: &mut Controller,
    u2_schedule: &InputSchedule,
    n_steps: usize,
    disturbances: &[Disturbance],
    state_stride: usize,
) -> Result<ClosedLoopLog, ControlError> {
    let interval = controller.config.interval_steps;
    let n = plant.map.n();
    let n_y1 = plant.n_y1;
    let stride = state_stride.max(1);

    let mut x = x0.clone();
    let mut records = Vec::new();
    let mut audits = Vec::with_capacity(n_steps);
    let mut states = Vec::new();
    let mut outputs = Vec::with_capacity(n_steps + 1);
    let mut y = DVector::zeros(plant.n_y());

    let measure = |x: &DVector<f64>, k: usize, y: &mut DVector<f64>| {
        plant.slice_at_step(k).c.mul_vec(x, y);
    };

    let mut k = 0usize;
    while k < n_steps {
        // Scripted state disturbances land at their exact step.
        for d in disturbances {
            let step = (d.time_s / plant.dt_s).round() as usize;
            if step == k {
                let state = plant.map.node_state(d.node);
                let idx = match d.species {
                    Species::Chlorine => state,
                    Species::Reactant => n + state,
                };
                x[idx] = d.value_mg_l;
            }
        }

        measure(&x, k, &mut y);
        let y1 = y.rows(0, n_y1).into_owned();

        let started = Instant::now();
        let action: ControlAction = controller.mpc_step(k, &y1, u2_schedule)?;
        let solve_ms = started.elapsed().as_secs_f64() * 1e3;
        records.push(ClosedLoopRecord {
            time_s: k as f64 * plant.dt_s,
            u1_mg_min: action.u1_mg_min.clone(),
            objective: action.objective,
            solve_ms,
            kkt_primal: action.kkt_primal,
            kkt_dual: action.kkt_dual,
            iterations: action.iterations,
            status: action.status,
            held_previous: action.held_previous,
        });

        let envelopes: Vec<McCormickEnvelope> = controller
            .last_caps
            .iter()
            .map(|&cap| McCormickEnvelope {
                x1_min: 0.0,
                x1_max: controller.config.x1_max_mg_l,
                x2_min: 0.0,
                x2_max: cap,
            })
            .collect();

        let steps_now = interval.min(n_steps - k);
        for j in 0..steps_now {
            let step = k + j;
            for d in disturbances {
                let d_step = (d.time_s / plant.dt_s).round() as usize;
                if d_step == step && j > 0 {
                    let state = plant.map.node_state(d.node);
                    let idx = match d.species {
                        Species::Chlorine => state,
                        Species::Reactant => n + state,
                    };
                    x[idx] = d.value_mg_l;
                }
            }

            measure(&x, step, &mut y);
            outputs.push(y.clone());
            if step % stride == 0 {
                states.push(x.clone());
            }

            let mut u_real = DVector::zeros(plant.n_u_real());
            u_real
                .rows_mut(0, plant.n_u1)
                .copy_from(&action.u1_mg_min);
            u_real
                .rows_mut(plant.n_u1, plant.n_u2)
                .copy_from(&u2_schedule.at(step).rows(plant.n_u1, plant.n_u2));
            let u_full = plant.full_input(&u_real)?;
            x = step_full(plant, step, &x, &u_full)?;

            // Envelope soundness on the true plant state.
            let mut audit = EnvelopeAudit::default();
            for (site, env) in plant.map.reaction_sites().iter().zip(&envelopes) {
                let x1 = x[site.state];
                let x2 = x[n + site.state];
                let exceed = (x2 - env.x2_max).max(x1 - env.x1_max).max(-x1).max(-x2);
                if exceed > audit.max_box_exceedance {
                    audit.max_box_exceedance = exceed;
                }
                if exceed <= 0.0 {
                    let (lo, hi) = env.z_interval(x1, x2);
                    let z = x1 * x2;
                    let viol = (lo - z).max(z - hi).max(0.0);
                    if viol > audit.max_envelope_violation {
                        audit.max_envelope_violation = viol;
                    }
                }
            }
            audits.push(audit);
        }

        controller.advance(k, &action.u1_mg_min, u2_schedule)?;
        k += steps_now;
    }
    measure(&x, n_steps, &mut y);
    outputs.push(y);
    states.push(x);

    Ok(ClosedLoopLog {
        records,
        trajectory: Trajectory {
            dt_s: plant.dt_s,
            state_stride: stride,
            states,
            outputs,
        },
        audits,
    })
}
