//! The receding-horizon controller: prediction over the augmented system,
//! QP assembly, and the output-feedback state estimate.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::dynamics::{FullOrderModel, InputSchedule};
use crate::mor::ReducedModel;
use crate::network::ControlSettings;

use super::augmented::compose_interval;
use super::mccormick::{build_envelopes, tighten_x2_caps};
use super::qp::{solve_qp, QpProblem, QpSettings, QpStatus};
use super::ControlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    /// Linear MPC on the Taylor-linearized multi-species ROM.
    Linearized,
    /// McCormick-relaxed MPC on the nonlinear ROM.
    Relaxed,
    /// Linear MPC that ignores the second species entirely.
    SingleSpecies,
}

impl ControllerKind {
    pub fn tag(self) -> &'static str {
        match self {
            ControllerKind::Linearized => "ms-lmpc",
            ControllerKind::Relaxed => "ms-rmpc",
            ControllerKind::SingleSpecies => "ss-lmpc",
        }
    }
}

/// Horizons, bounds, and weights of the regulation problem.
#[derive(Debug, Clone)]
pub struct ControlConfig {
    pub mu_per_mg: f64,
    pub u1_min_mg_min: f64,
    pub u1_max_mg_min: f64,
    pub x1_min_mg_l: f64,
    pub x1_max_mg_l: f64,
    pub x2_regulatory_mg_l: Option<f64>,
    pub interval_s: f64,
    pub interval_steps: usize,
    pub n_ctl: usize,
    pub n_pred: usize,
    /// Ridge on the normalized injection increments; keeps the linear-cost
    /// QP strictly solvable and is excluded from the reported objective.
    pub regularization: f64,
    /// Output-slack penalty as a multiple of the cost of one booster
    /// running at capacity for one interval. It must dominate the output
    /// constraints' shadow prices (those sit near the capacity cost divided
    /// by the output gain) without stretching the QP's cost range so far
    /// the splitting solver starves; two orders of margin does both.
    pub slack_weight_factor: f64,
}

impl ControlConfig {
    pub fn from_settings(settings: &ControlSettings, dt_s: f64) -> Result<Self, ControlError> {
        let steps = settings.control_interval_s / dt_s;
        if (steps - steps.round()).abs() > 1e-9 || steps < 1.0 {
            return Err(ControlError::Setup(format!(
                "control interval {} s must be a positive multiple of dt {} s",
                settings.control_interval_s, dt_s
            )));
        }
        Ok(Self {
            mu_per_mg: settings.mu_per_mg,
            u1_min_mg_min: settings.u1_min_mg_min,
            u1_max_mg_min: settings.u1_max_mg_min,
            x1_min_mg_l: settings.x1_min_mg_l,
            x1_max_mg_l: settings.x1_max_mg_l,
            x2_regulatory_mg_l: settings.x2_max_mg_l,
            interval_s: settings.control_interval_s,
            interval_steps: steps.round() as usize,
            n_ctl: settings.n_ctl.max(1),
            n_pred: settings.n_pred.max(settings.n_ctl.max(1)),
            regularization: 1e-6,
            slack_weight_factor: 100.0,
        })
    }

    /// Injection cost over one interval in dollars per (mg/min).
    fn mu_interval(&self) -> f64 {
        self.mu_per_mg * self.interval_s / 60.0
    }
}

/// First control move plus solve diagnostics.
#[derive(Debug, Clone)]
pub struct ControlAction {
    pub u1_mg_min: DVector<f64>,
    /// Planned injections over the control horizon (diagnostics).
    pub planned_u: Vec<DVector<f64>>,
    /// Predicted injection cost, the mu-part only.
    pub objective: f64,
    pub kkt_primal: f64,
    pub kkt_dual: f64,
    pub iterations: usize,
    pub status: QpStatus,
    /// Set when a solver failure made the controller hold its last action.
    pub held_previous: bool,
}

/// Output-feedback MPC over a reduced model.
///
/// Between measurements the reduced state propagates open loop; each
/// control interval the chlorine channels are reset to the sensor values
/// through a least-squares innovation on the reduced output rows.
pub struct Controller {
    pub kind: ControllerKind,
    pub rom: ReducedModel,
    /// The shifted full-order model the ROM projects; supplies the bilinear
    /// site coefficients and reconstruction metadata.
    pub reference: FullOrderModel,
    pub config: ControlConfig,
    /// Detected intrusion concentration (mg/L), the reactant ceiling while
    /// a plume is in the system.
    pub detected_intrusion_mg_l: f64,
    x_r: DVector<f64>,
    u_prev: DVector<f64>,
    warm: Option<(DVector<f64>, DVector<f64>)>,
    /// Reactant ceilings used for the last envelope build (audit surface).
    pub last_caps: Vec<f64>,
    site_rows: Vec<(RowDVector<f64>, RowDVector<f64>, f64, f64)>,
}

impl Controller {
    pub fn new(
        kind: ControllerKind,
        rom: ReducedModel,
        reference: FullOrderModel,
        config: ControlConfig,
        detected_intrusion_mg_l: f64,
    ) -> Result<Self, ControlError> {
        if rom.n_y1 == 0 || rom.n_u1 == 0 {
            return Err(ControlError::Setup(
                "controller needs at least one booster and one chlorine sensor".into(),
            ));
        }
        let n = reference.map.n();
        let site_rows = reference
            .map
            .reaction_sites()
            .iter()
            .map(|site| {
                let shift1 = reference.shift.as_ref().map_or(0.0, |x0| x0[site.state]);
                let shift2 = reference.shift.as_ref().map_or(0.0, |x0| x0[n + site.state]);
                (
                    rom.v_r.row(site.state).into_owned(),
                    rom.v_r.row(n + site.state).into_owned(),
                    shift1,
                    shift2,
                )
            })
            .collect();
        let n_r = rom.n_r;
        let n_u1 = rom.n_u1;
        Ok(Self {
            kind,
            rom,
            reference,
            config,
            detected_intrusion_mg_l,
            x_r: DVector::zeros(n_r),
            u_prev: DVector::zeros(n_u1),
            warm: None,
            last_caps: Vec::new(),
            site_rows,
        })
    }

    /// Current full-space state estimate.
    pub fn estimate(&self) -> DVector<f64> {
        self.rom.reconstruct_state(&self.x_r)
    }

    pub fn applied_u(&self) -> &DVector<f64> {
        &self.u_prev
    }

    /// Reset the chlorine output channels to the measured values via a
    /// least-squares innovation on the reduced output rows.
    pub fn observe(&mut self, k0: usize, y1_meas: &DVector<f64>) {
        let slice = self.rom.slice_at_step(k0);
        let c1 = slice.c_r.rows(0, self.rom.n_y1).into_owned();
        let mut y_est = &c1 * &self.x_r;
        if self.rom.const_channel {
            let cc = self.rom.n_u_real();
            for r in 0..self.rom.n_y1 {
                y_est[r] += slice.d[(r, cc)];
            }
        }
        let innovation = y1_meas - y_est;
        let svd = c1.svd(true, true);
        if let Ok(dx) = svd.solve(&innovation, 1e-10) {
            self.x_r += dx;
        }
    }

    /// Propagate the reduced estimate open loop across one control interval.
    pub fn advance(
        &mut self,
        k0: usize,
        u1: &DVector<f64>,
        u2_known: &InputSchedule,
    ) -> Result<(), ControlError> {
        for j in 0..self.config.interval_steps {
            let step = k0 + j;
            let mut u_real = DVector::zeros(self.rom.n_u_real());
            u_real.rows_mut(0, self.rom.n_u1).copy_from(u1);
            let known = self.known_u2(u2_known, step);
            u_real
                .rows_mut(self.rom.n_u1, self.rom.n_u2)
                .copy_from(&known);
            let u_full = self.rom.full_input(&u_real)?;
            self.x_r = self.rom.step(&self.reference, step, &self.x_r, &u_full)?;
        }
        Ok(())
    }

    /// The intrusion feedforward this controller admits to knowing.
    fn known_u2(&self, schedule: &InputSchedule, step: usize) -> DVector<f64> {
        match self.kind {
            ControllerKind::SingleSpecies => DVector::zeros(self.rom.n_u2),
            _ => schedule
                .at(step)
                .rows(self.rom.n_u1, self.rom.n_u2)
                .into_owned(),
        }
    }

    /// Solve the receding-horizon QP at water-quality step `k0` and return
    /// the first move. A solver failure holds the previous action.
    pub fn mpc_step(
        &mut self,
        k0: usize,
        y1_meas: &DVector<f64>,
        u2_known: &InputSchedule,
    ) -> Result<ControlAction, ControlError> {
        let cfg = self.config.clone();
        let s = cfg.interval_steps;
        let n_r = self.rom.n_r;
        let n_u1 = self.rom.n_u1;
        let n_y1 = self.rom.n_y1;
        let relaxed = self.kind == ControllerKind::Relaxed;
        let n_sites = self.reference.map.reaction_sites().len();
        let n_z = if relaxed { n_sites } else { 0 };

        // Measurement update first; the remaining output mismatch rides the
        // predictions as a constant bias, which is what keeps the
        // difference-form controller offset-free.
        self.observe(k0, y1_meas);

        // Exact time-varying interval models over the horizon (tank volumes
        // drift within a run, so freezing the first interval's matrices is
        // not good enough).
        let u2_fn = |step: usize| self.known_u2(u2_known, step);
        let mut intervals = Vec::with_capacity(cfg.n_pred);
        for i in 0..cfg.n_pred {
            intervals.push(compose_interval(
                &self.rom,
                &self.reference,
                k0 + i * s,
                s,
                &u2_fn,
                relaxed,
            )?);
        }

        // Current envelope boxes from the reconstructed estimate.
        let estimate = self.estimate();
        let plume_present = {
            let n = self.reference.map.n();
            let max_x2 = self
                .reference
                .map
                .reaction_sites()
                .iter()
                .map(|site| estimate[n + site.state])
                .fold(0.0f64, f64::max);
            let event_active = (0..s).any(|j| self.known_u2(u2_known, k0 + j).amax() > 0.0);
            event_active || max_x2 > 0.02 * self.detected_intrusion_mg_l
        };
        let detected = if plume_present {
            self.detected_intrusion_mg_l
        } else {
            0.0
        };
        let caps = tighten_x2_caps(
            &self.reference.map,
            &estimate,
            detected,
            cfg.x2_regulatory_mg_l,
        );
        let envelopes = build_envelopes(cfg.x1_max_mg_l, &caps)?;
        self.last_caps = caps;

        // Current bilinear products, the origin of the z increments.
        let n = self.reference.map.n();
        let z_prev: DVector<f64> = DVector::from_iterator(
            n_sites,
            self.reference.map.reaction_sites().iter().map(|site| {
                estimate[site.state].max(0.0) * estimate[n + site.state].max(0.0)
            }),
        );

        let n_dec = cfg.n_ctl * (n_u1 + n_z) + 2 * cfg.n_pred * n_y1;
        let du_col = |i: usize, b: usize| i * n_u1 + b;
        let dz_col = |i: usize, e: usize| cfg.n_ctl * n_u1 + i * n_z + e;
        let slo_col = |i: usize, r: usize| cfg.n_ctl * (n_u1 + n_z) + (i - 1) * n_y1 + r;
        let shi_col =
            |i: usize, r: usize| cfg.n_ctl * (n_u1 + n_z) + cfg.n_pred * n_y1 + (i - 1) * n_y1 + r;
        let u_scale = cfg.u1_max_mg_min.max(1.0);

        // Output bias between measurement and the model estimate.
        let bias = {
            let slice = self.rom.slice_at_step(k0);
            let mut y_est = slice.c_r.rows(0, n_y1) * &self.x_r;
            if self.rom.const_channel {
                let cc = self.rom.n_u_real();
                for r in 0..n_y1 {
                    y_est[r] += slice.d[(r, cc)];
                }
            }
            y1_meas - y_est
        };

        // Absolute-state prediction maps: x_r(k+i) = xr_map_i * d + xr_off_i,
        // with the inputs in increment coordinates relative to (u_prev,
        // z_prev). cum_u/cum_z track which decisions act at interval i.
        let mut xr_map = DMatrix::zeros(n_r, n_dec);
        let mut xr_off = self.x_r.clone();

        struct StepMaps {
            y_map: DMatrix<f64>,
            y_off: DVector<f64>,
            xr_map: DMatrix<f64>,
            xr_off: DVector<f64>,
        }
        let mut steps_out: Vec<StepMaps> = Vec::with_capacity(cfg.n_pred);

        for (i, iv) in intervals.iter().enumerate() {
            let mut next_map = &iv.a * &xr_map;
            let mut next_off = &iv.a * &xr_off + &iv.w + &iv.b_u * &self.u_prev;
            if relaxed {
                next_off += &iv.g_z * &z_prev;
            }
            // u(k+i) = u_prev + sum_{j <= min(i, Nc-1)} u_scale * du(j).
            for j in 0..=i.min(cfg.n_ctl - 1) {
                for b in 0..n_u1 {
                    let col = iv.b_u.column(b) * u_scale;
                    for r in 0..n_r {
                        next_map[(r, du_col(j, b))] += col[r];
                    }
                }
                for e in 0..n_z {
                    let col = iv.g_z.column(e);
                    for r in 0..n_r {
                        next_map[(r, dz_col(j, e))] += col[r];
                    }
                }
            }
            xr_map = next_map;
            xr_off = next_off;

            let y_map = &iv.c1 * &xr_map;
            let y_off = &iv.c1 * &xr_off + &iv.w_y + &bias;
            steps_out.push(StepMaps {
                y_map,
                y_off,
                xr_map: xr_map.clone(),
                xr_off: xr_off.clone(),
            });
        }

        // Assemble constraint rows.
        let n_rows = cfg.n_ctl * n_u1 + 2 * cfg.n_pred * n_y1 + 2 * cfg.n_pred * n_y1
            + 4 * n_z * cfg.n_ctl;
        let mut a = DMatrix::zeros(n_rows, n_dec);
        let mut l = DVector::from_element(n_rows, f64::NEG_INFINITY);
        let mut u = DVector::from_element(n_rows, f64::INFINITY);
        let mut row = 0;

        // Hard input bounds: cumulative increments.
        for i in 0..cfg.n_ctl {
            for b in 0..n_u1 {
                for j in 0..=i {
                    a[(row, du_col(j, b))] = u_scale;
                }
                l[row] = cfg.u1_min_mg_min - self.u_prev[b];
                u[row] = cfg.u1_max_mg_min - self.u_prev[b];
                row += 1;
            }
        }
        // Soft output box.
        for (i, sm) in steps_out.iter().enumerate() {
            let i1 = i + 1;
            for r in 0..n_y1 {
                for c in 0..n_dec {
                    a[(row, c)] = sm.y_map[(r, c)];
                }
                a[(row, slo_col(i1, r))] += 1.0;
                l[row] = cfg.x1_min_mg_l - sm.y_off[r];
                row += 1;
                for c in 0..n_dec {
                    a[(row, c)] = sm.y_map[(r, c)];
                }
                a[(row, shi_col(i1, r))] -= 1.0;
                u[row] = cfg.x1_max_mg_l - sm.y_off[r];
                row += 1;
            }
        }
        // Slack nonnegativity.
        for i in 1..=cfg.n_pred {
            for r in 0..n_y1 {
                a[(row, slo_col(i, r))] = 1.0;
                l[row] = 0.0;
                row += 1;
                a[(row, shi_col(i, r))] = 1.0;
                l[row] = 0.0;
                row += 1;
            }
        }
        // McCormick rows per site and control step, on the predicted
        // concentrations at the start of each controlled interval.
        if relaxed {
            for i in 0..cfg.n_ctl {
                // State at step k0 + i*S: for i = 0 the current estimate
                // (decision-independent), afterwards the prediction maps.
                let (x_map, x_off): (Option<&DMatrix<f64>>, &DVector<f64>) = if i == 0 {
                    (None, &self.x_r)
                } else {
                    let sm = &steps_out[i - 1];
                    (Some(&sm.xr_map), &sm.xr_off)
                };
                for (e, env) in envelopes.iter().enumerate() {
                    let (v1, v2, shift1, shift2) = &self.site_rows[e];
                    let x1_off = (v1 * x_off)[0] + shift1;
                    let x2_off = (v2 * x_off)[0] + shift2;
                    let (x1_max, x2_max) = (env.x1_max, env.x2_max);

                    // Row template: z - a1 * x1 - a2 * x2 with bounds moved
                    // to l/u; z = z_prev + sum of dz decisions.
                    let mut push = |a1: f64, a2: f64, lo: Option<f64>, hi: Option<f64>| {
                        for j in 0..=i {
                            a[(row, dz_col(j, e))] = 1.0;
                        }
                        if let Some(xm) = x_map {
                            for c in 0..n_dec {
                                let coupled = -a1 * (v1 * xm.column(c))[0]
                                    - a2 * (v2 * xm.column(c))[0];
                                if coupled != 0.0 {
                                    a[(row, c)] += coupled;
                                }
                            }
                        }
                        let base = -z_prev[e] + a1 * x1_off + a2 * x2_off;
                        if let Some(lo) = lo {
                            l[row] = lo + base;
                        }
                        if let Some(hi) = hi {
                            u[row] = hi + base;
                        }
                        row += 1;
                    };
                    // z >= 0
                    push(0.0, 0.0, Some(0.0), None);
                    // z >= x1_max x2 + x1 x2_max - x1_max x2_max
                    push(x2_max, x1_max, Some(-x1_max * x2_max), None);
                    // z <= x1_max x2
                    push(0.0, x1_max, None, Some(0.0));
                    // z <= x2_max x1
                    push(x2_max, 0.0, None, Some(0.0));
                }
            }
        }
        debug_assert_eq!(row, n_rows);

        // Cost: mu over the horizon (in du coordinates), the documented
        // ridge on normalized du, and the slack exact penalty.
        let mut q = DVector::zeros(n_dec);
        let mut p_diag = DVector::zeros(n_dec);
        let mu_i = cfg.mu_interval();
        for j in 0..cfg.n_ctl {
            for b in 0..n_u1 {
                q[du_col(j, b)] = mu_i * u_scale * (cfg.n_pred - j) as f64;
                p_diag[du_col(j, b)] = cfg.regularization;
            }
        }
        let slack_w = cfg.slack_weight_factor * mu_i * u_scale;
        for i in 1..=cfg.n_pred {
            for r in 0..n_y1 {
                q[slo_col(i, r)] = slack_w;
                q[shi_col(i, r)] = slack_w;
            }
        }

        let problem = QpProblem {
            p_diag,
            q,
            a,
            l,
            u,
            warm: self.warm.take(),
        };
        let settings = QpSettings::default();
        let solved = solve_qp(&problem, &settings);

        let action = match solved {
            Err(_)
            | Ok(super::qp::QpSolution {
                status: QpStatus::Infeasible,
                ..
            }) => ControlAction {
                u1_mg_min: self.u_prev.clone(),
                planned_u: vec![self.u_prev.clone(); cfg.n_ctl],
                objective: f64::NAN,
                kkt_primal: f64::NAN,
                kkt_dual: f64::NAN,
                iterations: 0,
                status: QpStatus::Infeasible,
                held_previous: true,
            },
            Ok(sol) => {
                self.warm = Some((sol.x.clone(), sol.y.clone()));
                let mut planned = Vec::with_capacity(cfg.n_ctl);
                let mut u_acc = self.u_prev.clone();
                for i in 0..cfg.n_ctl {
                    for b in 0..n_u1 {
                        u_acc[b] += u_scale * sol.x[du_col(i, b)];
                    }
                    planned.push(u_acc.clone());
                }
                let mut objective = 0.0;
                for i in 0..cfg.n_pred {
                    let held = &planned[i.min(cfg.n_ctl - 1)];
                    objective += mu_i * held.sum();
                }
                let first = planned[0]
                    .map(|v| v.clamp(cfg.u1_min_mg_min, cfg.u1_max_mg_min));
                ControlAction {
                    u1_mg_min: first,
                    planned_u: planned,
                    objective,
                    kkt_primal: sol.primal_residual,
                    kkt_dual: sol.dual_residual,
                    iterations: sol.iterations,
                    status: sol.status,
                    held_previous: false,
                }
            }
        };

        self.u_prev = action.u1_mg_min.clone();
        Ok(action)
    }
}
