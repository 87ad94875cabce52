//! Control-interval composition of the reduced model and the velocity-form
//! augmented system the MPC predicts with.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::FullOrderModel;
use crate::mor::ReducedModel;

use super::ControlError;

/// Reduced dynamics composed over one control interval, with the booster
/// inputs and the bilinear-product channel held constant across it.
#[derive(Debug, Clone)]
pub struct IntervalModel {
    /// State transition over the interval.
    pub a: DMatrix<f64>,
    /// Booster channel map (mg/min, held constant).
    pub b_u: DMatrix<f64>,
    /// Bilinear-product channel map, one column per reaction site; empty in
    /// the linear modes. Carries the discrete `beta = -k_r dt` scaling and
    /// tank volume ratios through the sites' alpha coefficients.
    pub g_z: DMatrix<f64>,
    /// Effect of the known inputs over the interval (intrusion feedforward
    /// and the constant channel).
    pub w: DVector<f64>,
    /// Chlorine output rows at the interval boundary.
    pub c1: DMatrix<f64>,
    /// Known feedthrough on the chlorine outputs (constant channel).
    pub w_y: DVector<f64>,
}

/// Compose the reduced slices over `steps` water-quality steps starting at
/// `k0`. `u2_known` supplies the intrusion feedforward per step (zero for a
/// controller that ignores the second species); `with_z` attaches the
/// product channel.
pub fn compose_interval(
    rom: &ReducedModel,
    reference: &FullOrderModel,
    k0: usize,
    steps: usize,
    u2_known: &dyn Fn(usize) -> DVector<f64>,
    with_z: bool,
) -> Result<IntervalModel, ControlError> {
    let n_r = rom.n_r;
    let n_u1 = rom.n_u1;
    let n_u2 = rom.n_u2;
    let n_sites = reference.map.reaction_sites().len();
    let n_z = if with_z { n_sites } else { 0 };

    let mut a = DMatrix::identity(n_r, n_r);
    let mut b_u = DMatrix::zeros(n_r, n_u1);
    let mut g_z = DMatrix::zeros(n_r, n_z);
    let mut w = DVector::zeros(n_r);

    let singular = || ControlError::Numerical("reduced E is singular".into());
    for j in 0..steps {
        let step_idx = k0 + j;
        let slice = rom.slice_at_step(step_idx);
        // Effective per-step maps through the factored E_r.
        let a_eff = slice.solve_e_dense(&slice.a_r).ok_or_else(singular)?;
        let b_eff = slice.solve_e_dense(&slice.b_r).ok_or_else(singular)?;

        // x <- A_eff x + B_eff u_full, accumulated onto the interval maps.
        a = &a_eff * &a;
        b_u = &a_eff * &b_u;
        g_z = &a_eff * &g_z;
        w = &a_eff * &w;

        for c in 0..n_u1 {
            for r in 0..n_r {
                b_u[(r, c)] += b_eff[(r, c)];
            }
        }
        let u2 = u2_known(step_idx);
        for c in 0..n_u2 {
            for r in 0..n_r {
                w[r] += b_eff[(r, n_u1 + c)] * u2[c];
            }
        }
        if rom.const_channel {
            let cc = n_u1 + n_u2;
            for r in 0..n_r {
                w[r] += b_eff[(r, cc)];
            }
        }

        if with_z {
            // Full-space product channel: alpha on both species rows of each
            // site, projected and passed through E_r.
            let full_slice = reference.slice_at_step(step_idx);
            let entries = &full_slice
                .f
                .as_ref()
                .ok_or_else(|| ControlError::Setup("relaxed mode needs a bilinear model".into()))?
                .entries;
            let mut g_full = DMatrix::zeros(n_r, n_sites);
            for (s, e) in entries.iter().enumerate() {
                for r in 0..n_r {
                    g_full[(r, s)] = e.alpha * (rom.l_r[(r, e.i1)] + rom.l_r[(r, e.i2)]);
                }
            }
            let g_eff = slice.solve_e_dense(&g_full).ok_or_else(singular)?;
            g_z += &g_eff;
        }
    }

    // Output rows at the end of the interval.
    let slice = rom.slice_at_step(k0 + steps);
    let n_y1 = rom.n_y1;
    let c1 = slice.c_r.rows(0, n_y1).into_owned();
    let mut w_y = DVector::zeros(n_y1);
    if rom.const_channel {
        let cc = n_u1 + n_u2;
        for r in 0..n_y1 {
            w_y[r] = slice.d[(r, cc)];
        }
    }

    Ok(IntervalModel {
        a,
        b_u,
        g_z,
        w,
        c1,
        w_y,
    })
}

/// Velocity-form augmented system over the interval model:
/// state `[dx; y1]`, transition `[[A, 0], [C1 A, I]]`, input map
/// `[[B, G], [C1 B, C1 G]]` over `[du; dz]`.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    pub phi_a: DMatrix<f64>,
    pub gamma_a: DMatrix<f64>,
    pub n_r: usize,
    pub n_y1: usize,
    pub n_u1: usize,
    pub n_z: usize,
}

pub fn augment_system(interval: &IntervalModel) -> AugmentedSystem {
    let n_r = interval.a.nrows();
    let n_y1 = interval.c1.nrows();
    let n_u1 = interval.b_u.ncols();
    let n_z = interval.g_z.ncols();
    let n_a = n_r + n_y1;

    let mut phi_a = DMatrix::zeros(n_a, n_a);
    phi_a.view_mut((0, 0), (n_r, n_r)).copy_from(&interval.a);
    phi_a
        .view_mut((n_r, 0), (n_y1, n_r))
        .copy_from(&(&interval.c1 * &interval.a));
    for i in 0..n_y1 {
        phi_a[(n_r + i, n_r + i)] = 1.0;
    }

    let mut gamma_a = DMatrix::zeros(n_a, n_u1 + n_z);
    gamma_a.view_mut((0, 0), (n_r, n_u1)).copy_from(&interval.b_u);
    gamma_a.view_mut((0, n_u1), (n_r, n_z)).copy_from(&interval.g_z);
    gamma_a
        .view_mut((n_r, 0), (n_y1, n_u1))
        .copy_from(&(&interval.c1 * &interval.b_u));
    gamma_a
        .view_mut((n_r, n_u1), (n_y1, n_z))
        .copy_from(&(&interval.c1 * &interval.g_z));

    AugmentedSystem {
        phi_a,
        gamma_a,
        n_r,
        n_y1,
        n_u1,
        n_z,
    }
}
