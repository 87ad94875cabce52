//! Snapshot collection on the (shifted) full-order model.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::{step_full, FullOrderModel, InputSchedule};

use super::MorError;

/// How to excite the model while recording snapshots.
#[derive(Debug, Clone)]
pub enum Excitation {
    /// One run per input channel (constant channel included) with an
    /// impulse of the given gain at step 0, plus one joint run with every
    /// channel impulsed together. Nonzero initial conditions are mitigated
    /// by running booster channels hotter than the constant channel, which
    /// keeps the basis anchored to the actuator locations; the joint run is
    /// what exposes the bilinear term, which needs both species at once.
    ChannelImpulses { gains: Vec<f64> },
    /// A single run replaying a schedule; puts that exact trajectory in the
    /// snapshot span.
    Schedule(InputSchedule),
}

impl Excitation {
    /// Default impulse gains: boosters and intrusion channels at
    /// `booster_gain`, the constant channel at one.
    pub fn default_impulses(model: &FullOrderModel, booster_gain: f64) -> Self {
        let mut gains = vec![1.0; model.n_u_total()];
        for g in gains.iter_mut().take(model.n_u1 + model.n_u2) {
            *g = booster_gain;
        }
        Excitation::ChannelImpulses { gains }
    }

    pub fn describe(&self) -> String {
        match self {
            Excitation::ChannelImpulses { gains } => format!("channel impulses, gains {gains:?}"),
            Excitation::Schedule(s) => format!("schedule replay over {} steps", s.len()),
        }
    }
}

/// State (and optionally nonlinear-term) snapshots.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    /// `x(0) .. x(m-1)` per run, runs concatenated input-major.
    pub x: DMatrix<f64>,
    /// `f(x(k))` aligned with the columns of `x`; bilinear models only.
    pub f: Option<DMatrix<f64>>,
    /// Adjoint snapshots, output-major; filled by the balanced method.
    pub p: Option<DMatrix<f64>>,
    /// Steps per run.
    pub m: usize,
    pub excitation: String,
}

impl SnapshotSet {
    pub fn n_columns(&self) -> usize {
        self.x.ncols()
    }
}

/// Run the excitation from zero initial state and record `m` snapshots per
/// run. Models with nonzero physical initial conditions must be shifted
/// first; the runs here always start at the origin.
pub fn collect_state_snapshots(
    model: &FullOrderModel,
    excitation: &Excitation,
    m: usize,
    with_f: bool,
) -> Result<SnapshotSet, MorError> {
    if m == 0 {
        return Err(MorError::Setup("snapshot length must be positive".into()));
    }
    if with_f && model.slices.iter().any(|s| s.f.is_none()) {
        return Err(MorError::Setup(
            "nonlinear-term snapshots requested on a linear model".into(),
        ));
    }

    let runs: Vec<DVector<f64>> = match excitation {
        Excitation::ChannelImpulses { gains } => {
            if gains.len() != model.n_u_total() {
                return Err(MorError::DimensionMismatch {
                    expected: model.n_u_total(),
                    got: gains.len(),
                });
            }
            let mut runs: Vec<DVector<f64>> = gains
                .iter()
                .enumerate()
                .map(|(c, &g)| {
                    let mut u = DVector::zeros(model.n_u_total());
                    u[c] = g;
                    u
                })
                .collect();
            if model.n_u_total() > 1 {
                runs.push(DVector::from_column_slice(gains));
            }
            runs
        }
        Excitation::Schedule(_) => vec![DVector::zeros(0)],
    };

    let results: Vec<Result<(DMatrix<f64>, Option<DMatrix<f64>>), MorError>> = runs
        .par_iter()
        .map(|impulse| {
            let dim = model.n();
            let mut x = DVector::zeros(dim);
            let mut cols_x = DMatrix::zeros(dim, m);
            let mut cols_f = with_f.then(|| DMatrix::zeros(dim, m));
            let zero_u = DVector::zeros(model.n_u_total());
            for k in 0..m {
                cols_x.set_column(k, &x);
                if let Some(cf) = cols_f.as_mut() {
                    let slice = model.slice_at_step(k);
                    cf.set_column(k, &slice.f.as_ref().expect("bilinear").eval(&x));
                }
                let u_full = match excitation {
                    Excitation::ChannelImpulses { .. } => {
                        if k == 0 {
                            impulse.clone()
                        } else {
                            zero_u.clone()
                        }
                    }
                    Excitation::Schedule(s) => model.full_input(s.at(k))?,
                };
                x = step_full(model, k, &x, &u_full)?;
                if !x.iter().all(|v| v.is_finite()) {
                    return Err(MorError::NonFinite { step: k + 1 });
                }
            }
            Ok((cols_x, cols_f))
        })
        .collect();

    let mut blocks_x = Vec::with_capacity(results.len());
    let mut blocks_f = Vec::with_capacity(results.len());
    for r in results {
        let (bx, bf) = r?;
        blocks_x.push(bx);
        if let Some(bf) = bf {
            blocks_f.push(bf);
        }
    }
    let dim = model.n();
    let total = m * blocks_x.len();
    let mut x = DMatrix::zeros(dim, total);
    for (i, b) in blocks_x.iter().enumerate() {
        x.columns_mut(i * m, m).copy_from(b);
    }
    let f = with_f.then(|| {
        let mut f = DMatrix::zeros(dim, total);
        for (i, b) in blocks_f.iter().enumerate() {
            f.columns_mut(i * m, m).copy_from(b);
        }
        f
    });

    Ok(SnapshotSet {
        x,
        f,
        p: None,
        m,
        excitation: excitation.describe(),
    })
}
