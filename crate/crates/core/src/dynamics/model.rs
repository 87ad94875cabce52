//! Time-varying state-space model and the structured bilinear term.

use std::sync::Arc;

use nalgebra::DVector;

use crate::network::{ReactionKind, Scheme, StateIndexMap};
use crate::sparse::{CsrMatrix, UpstreamFactor};

use super::ModelError;

/// One bilinear mutual-reaction site. `i1`/`i2` are the stacked state
/// indices of the two species at the same element; the entry adds
/// `alpha * x[i1] * x[i2]` to both rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearEntry {
    pub i1: usize,
    pub i2: usize,
    pub alpha: f64,
}

/// The mutual-reaction vector `f`: zero except at pipe-segment and tank
/// states, where both species lose mass at the same rate.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearTerm {
    pub dim: usize,
    pub entries: Vec<BilinearEntry>,
}

impl NonlinearTerm {
    /// `out += f(x)`.
    pub fn eval_add(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        debug_assert_eq!(x.len(), self.dim);
        for e in &self.entries {
            let v = e.alpha * x[e.i1] * x[e.i2];
            out[e.i1] += v;
            out[e.i2] += v;
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.eval_add(x, &mut out);
        out
    }
}

/// State-space matrices over one hydraulic step.
#[derive(Debug, Clone)]
pub struct ModelSlice {
    pub e: CsrMatrix,
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub c: CsrMatrix,
    pub d: CsrMatrix,
    pub f: Option<NonlinearTerm>,
    /// Courant number per pipe ordinal at this hydraulic step.
    pub courant: Vec<f64>,
    /// Substitution order for `E`; implicit scheme only.
    pub factor: Option<UpstreamFactor>,
}

impl ModelSlice {
    /// Solve `E w = rhs`, exploiting `E = I` for the explicit scheme.
    pub fn solve_e(&self, rhs: &DVector<f64>, out: &mut DVector<f64>) {
        match &self.factor {
            None => out.copy_from(rhs),
            Some(factor) => factor.solve(&self.e, rhs, out),
        }
    }

    /// Solve `E^T w = rhs`.
    pub fn solve_e_transpose(&self, rhs: &DVector<f64>, out: &mut DVector<f64>) {
        match &self.factor {
            None => out.copy_from(rhs),
            Some(factor) => factor.solve_transpose(&self.e, rhs, out),
        }
    }
}

/// Full-order two-species model: one matrix slice per hydraulic step plus
/// the step-to-slice mapping for the whole simulation horizon.
///
/// Input layout is `[u1 (boosters) ; u2 (intrusions) ; constant]`, with the
/// trailing constant channel present only when `const_channel` is set (M-2
/// floor term, linearization constant, or shifted initial conditions).
/// Output layout is `[chlorine sensors ; reactant sensors]`.
#[derive(Debug, Clone)]
pub struct FullOrderModel {
    pub slices: Vec<ModelSlice>,
    /// Slice index for each water-quality step.
    pub slice_of_step: Vec<usize>,
    pub dt_s: f64,
    pub scheme: Scheme,
    pub reaction_kind: ReactionKind,
    pub map: Arc<StateIndexMap>,
    pub n_u1: usize,
    pub n_u2: usize,
    pub const_channel: bool,
    pub n_y1: usize,
    pub n_y2: usize,
    /// Origin shift for models in hat coordinates (`x = x_hat + shift`).
    pub shift: Option<DVector<f64>>,
}

impl FullOrderModel {
    pub fn n(&self) -> usize {
        self.map.n_stacked()
    }

    /// Real (schedulable) input channels, excluding the constant channel.
    pub fn n_u_real(&self) -> usize {
        self.n_u1 + self.n_u2
    }

    /// Total input channels as seen by the matrices.
    pub fn n_u_total(&self) -> usize {
        self.n_u_real() + usize::from(self.const_channel)
    }

    pub fn n_y(&self) -> usize {
        self.n_y1 + self.n_y2
    }

    pub fn n_steps(&self) -> usize {
        self.slice_of_step.len()
    }

    pub fn slice_at_step(&self, step: usize) -> &ModelSlice {
        &self.slices[self.slice_of_step[step.min(self.slice_of_step.len() - 1)]]
    }

    /// Extend an input vector with the constant channel when present.
    pub fn full_input(&self, u_real: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        if u_real.len() != self.n_u_real() {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_u_real(),
                got: u_real.len(),
            });
        }
        if !self.const_channel {
            return Ok(u_real.clone());
        }
        let mut u = DVector::zeros(self.n_u_total());
        u.rows_mut(0, u_real.len()).copy_from(u_real);
        u[self.n_u_real()] = 1.0;
        Ok(u)
    }
}
