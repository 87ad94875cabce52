//! Shift to zero initial conditions via a constant input channel.
//!
//! Writing the dynamics in `x_hat = x - x0` turns the initial state into a
//! constant forcing `(A - E) x0` on an always-one input channel; the
//! bilinear term expands into the same products on shifted states plus
//! per-species linear couplings `alpha .* x0` and a constant
//! `alpha .* x0_1 .* x0_2`, which fold into `A` and the constant channel.
//! Simulating the shifted model from zero and adding `x0` back reproduces
//! the original trajectory, which is what lets the snapshot-based reductions
//! assume zero initial conditions.

use nalgebra::DVector;

use crate::sparse::Triplets;

use super::model::{FullOrderModel, ModelSlice};
use super::ModelError;

/// Rewrite `model` over shifted states with an appended constant channel.
pub fn shift_initial_conditions(
    model: &FullOrderModel,
    x0: &DVector<f64>,
) -> Result<FullOrderModel, ModelError> {
    if model.shift.is_some() {
        return Err(ModelError::AlreadyAugmented);
    }
    let dim = model.n();
    if x0.len() != dim {
        return Err(ModelError::DimensionMismatch {
            expected: dim,
            got: x0.len(),
        });
    }

    let had_const = model.const_channel;
    let n_real = model.n_u_real();

    let slices = model
        .slices
        .iter()
        .map(|slice| augment_slice(slice, x0, dim, n_real, had_const))
        .collect();

    Ok(FullOrderModel {
        slices,
        slice_of_step: model.slice_of_step.clone(),
        dt_s: model.dt_s,
        scheme: model.scheme,
        reaction_kind: model.reaction_kind,
        map: model.map.clone(),
        n_u1: model.n_u1,
        n_u2: model.n_u2,
        const_channel: true,
        n_y1: model.n_y1,
        n_y2: model.n_y2,
        shift: Some(x0.clone()),
    })
}

fn augment_slice(
    slice: &ModelSlice,
    x0: &DVector<f64>,
    dim: usize,
    n_real: usize,
    had_const: bool,
) -> ModelSlice {
    // Constant-channel column: (A - E) x0 plus the bilinear constant, merged
    // with any existing constant column.
    let mut const_col = DVector::zeros(dim);
    let mut ax0 = DVector::zeros(dim);
    slice.a.mul_vec(x0, &mut ax0);
    let mut ex0 = DVector::zeros(dim);
    slice.e.mul_vec(x0, &mut ex0);
    const_col += &ax0;
    const_col -= &ex0;
    if let Some(f) = &slice.f {
        f.eval_add(x0, &mut const_col);
    }

    let mut tb = Triplets::new(dim, n_real + 1);
    for i in 0..dim {
        for (j, v) in slice.b.row(i) {
            if had_const && j == n_real {
                const_col[i] += v;
            } else {
                tb.push(i, j, v);
            }
        }
    }
    for i in 0..dim {
        tb.push(i, n_real, const_col[i]);
    }

    // Cross and self couplings from expanding the bilinear term around x0.
    let mut ta = Triplets::new(dim, dim);
    for i in 0..dim {
        for (j, v) in slice.a.row(i) {
            ta.push(i, j, v);
        }
    }
    if let Some(f) = &slice.f {
        for e in &f.entries {
            ta.push(e.i1, e.i1, e.alpha * x0[e.i2]);
            ta.push(e.i1, e.i2, e.alpha * x0[e.i1]);
            ta.push(e.i2, e.i1, e.alpha * x0[e.i2]);
            ta.push(e.i2, e.i2, e.alpha * x0[e.i1]);
        }
    }

    // Output feedthrough picks up C x0 on the constant channel.
    let n_y = slice.c.nrows();
    let mut cx0 = DVector::zeros(n_y);
    slice.c.mul_vec(x0, &mut cx0);
    let mut td = Triplets::new(n_y, n_real + 1);
    for i in 0..n_y {
        for (j, v) in slice.d.row(i) {
            if had_const && j == n_real {
                cx0[i] += v;
            } else {
                td.push(i, j, v);
            }
        }
    }
    for i in 0..n_y {
        td.push(i, n_real, cx0[i]);
    }

    ModelSlice {
        e: slice.e.clone(),
        a: ta.build(),
        b: tb.build(),
        c: slice.c.clone(),
        d: td.build(),
        f: slice.f.clone(),
        courant: slice.courant.clone(),
        factor: slice.factor.clone(),
    }
}
