//! Projection of the full-order slices onto a transform pair, and the
//! reduced model's simulation loop.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{FullOrderModel, InputSchedule};
use crate::network::StateIndexMap;

use super::deim::DeimData;
use super::pod::TransformPair;
use super::MorError;

/// One projected slice; `e_lu` is the factored `E_r` reused every step.
#[derive(Debug, Clone)]
pub struct RomSlice {
    pub e_r: DMatrix<f64>,
    pub a_r: DMatrix<f64>,
    pub b_r: DMatrix<f64>,
    pub c_r: DMatrix<f64>,
    pub d: DMatrix<f64>,
    e_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Per selected index: bilinear entry ordinal in the slice's term list.
    deim_entries: Vec<usize>,
}

/// A DEIM-selected interpolation point with the reduced-space rows that
/// reconstruct the two species' concentrations at its element.
#[derive(Debug, Clone)]
struct DeimSite {
    v1_row: nalgebra::RowDVector<f64>,
    v2_row: nalgebra::RowDVector<f64>,
}

#[derive(Debug, Clone)]
struct DeimRom {
    /// `L_r U_fr (K^T U_fr)^{-1}`, applied to the sampled values.
    projector: DMatrix<f64>,
    sites: Vec<DeimSite>,
    /// Touched full-state rows, for diagnostics.
    selected: Vec<usize>,
}

/// Reduced-order model sharing the full model's step-to-slice mapping.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub slices: Vec<RomSlice>,
    pub slice_of_step: Vec<usize>,
    pub dt_s: f64,
    pub n_r: usize,
    pub v_r: DMatrix<f64>,
    pub l_r: DMatrix<f64>,
    pub map: Arc<StateIndexMap>,
    pub n_u1: usize,
    pub n_u2: usize,
    pub const_channel: bool,
    pub n_y1: usize,
    pub n_y2: usize,
    /// Origin shift inherited from the full model (hat coordinates).
    pub shift: Option<DVector<f64>>,
    deim: Option<DeimRom>,
    /// Full-space bilinear fallback when no interpolation data is attached.
    full_f: bool,
}

impl RomSlice {
    /// `E_r^{-1} M` through the cached factorization.
    pub fn solve_e_dense(&self, m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        self.e_lu.solve(m)
    }
}

impl ReducedModel {
    pub fn n_u_real(&self) -> usize {
        self.n_u1 + self.n_u2
    }

    pub fn n_u_total(&self) -> usize {
        self.n_u_real() + usize::from(self.const_channel)
    }

    pub fn n_y(&self) -> usize {
        self.n_y1 + self.n_y2
    }

    pub fn slice_at_step(&self, step: usize) -> &RomSlice {
        &self.slices[self.slice_of_step[step.min(self.slice_of_step.len() - 1)]]
    }

    pub fn full_input(&self, u_real: &DVector<f64>) -> Result<DVector<f64>, MorError> {
        if u_real.len() != self.n_u_real() {
            return Err(MorError::DimensionMismatch {
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

    /// Reduced initial state for a full-space state.
    pub fn project_state(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.shift {
            Some(x0) => &self.l_r * (x - x0),
            None => &self.l_r * x,
        }
    }

    /// Physical-space reconstruction `V_r x_r (+ shift)`.
    pub fn reconstruct_state(&self, x_r: &DVector<f64>) -> DVector<f64> {
        let mut x = &self.v_r * x_r;
        if let Some(x0) = &self.shift {
            x += x0;
        }
        x
    }

    /// State rows the per-step bilinear evaluation touches (DEIM path).
    pub fn deim_indices(&self) -> Option<&[usize]> {
        self.deim.as_ref().map(|d| d.selected.as_slice())
    }

    /// One reduced step. The bilinear contribution comes from the DEIM
    /// interpolant when attached (cost independent of the full dimension),
    /// or from a full-space evaluation as a fallback.
    pub fn step(
        &self,
        full: &FullOrderModel,
        step_idx: usize,
        x_r: &DVector<f64>,
        u_full: &DVector<f64>,
    ) -> Result<DVector<f64>, MorError> {
        let slice = self.slice_at_step(step_idx);
        let mut rhs = &slice.a_r * x_r + &slice.b_r * u_full;
        if let Some(deim) = &self.deim {
            let full_slice = full.slice_at_step(step_idx);
            let entries = &full_slice.f.as_ref().expect("bilinear model").entries;
            let mut sampled = DVector::zeros(deim.sites.len());
            for (k, site) in deim.sites.iter().enumerate() {
                let c1 = (&site.v1_row * x_r)[0];
                let c2 = (&site.v2_row * x_r)[0];
                sampled[k] = entries[slice.deim_entries[k]].alpha * c1 * c2;
            }
            rhs += &deim.projector * sampled;
        } else if self.full_f {
            let full_slice = full.slice_at_step(step_idx);
            if let Some(f) = &full_slice.f {
                let x = &self.v_r * x_r;
                rhs += &self.l_r * f.eval(&x);
            }
        }
        let x_next = slice
            .e_lu
            .solve(&rhs)
            .ok_or_else(|| MorError::RankDeficient("reduced E is singular".into()))?;
        if !x_next.iter().all(|v| v.is_finite()) {
            return Err(MorError::NonFinite { step: step_idx + 1 });
        }
        Ok(x_next)
    }

    /// Simulate the reduced model, recording outputs every step.
    pub fn simulate(
        &self,
        full: &FullOrderModel,
        x_r0: &DVector<f64>,
        inputs: &InputSchedule,
        n_steps: usize,
    ) -> Result<RomTrajectory, MorError> {
        let mut x_r = x_r0.clone();
        let mut outputs = Vec::with_capacity(n_steps + 1);
        let mut reduced_states = Vec::with_capacity(n_steps + 1);
        for k in 0..=n_steps {
            let u_full = self.full_input(inputs.at(k))?;
            let slice = self.slice_at_step(k.min(n_steps.saturating_sub(1)));
            outputs.push(&slice.c_r * &x_r + &slice.d * &u_full);
            reduced_states.push(x_r.clone());
            if k == n_steps {
                break;
            }
            x_r = self.step(full, k, &x_r, &u_full)?;
        }
        Ok(RomTrajectory {
            outputs,
            reduced_states,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RomTrajectory {
    pub outputs: Vec<DVector<f64>>,
    pub reduced_states: Vec<DVector<f64>>,
}

/// Project every slice of `model` through the transform pair; attach DEIM
/// interpolation data for the bilinear term when provided.
pub fn reduce_model(
    model: &FullOrderModel,
    pair: &TransformPair,
    deim: Option<&DeimData>,
) -> Result<ReducedModel, MorError> {
    let dim = model.n();
    if pair.dim() != dim {
        return Err(MorError::DimensionMismatch {
            expected: dim,
            got: pair.dim(),
        });
    }
    let is_bilinear = model.slices.iter().all(|s| s.f.is_some());
    if deim.is_some() && !is_bilinear {
        return Err(MorError::Setup(
            "DEIM data supplied for a linear model".into(),
        ));
    }

    let n_r = pair.n_r();
    let deim_rom = match deim {
        None => None,
        Some(d) => {
            let inv = d.interpolation_inverse()?;
            let projector = (&pair.l_r * &d.u_fr) * inv;
            let n = model.map.n();
            let sites = d
                .indices
                .iter()
                .map(|&idx| {
                    let species1 = idx % n;
                    DeimSite {
                        v1_row: pair.v_r.row(species1).into_owned(),
                        v2_row: pair.v_r.row(species1 + n).into_owned(),
                    }
                })
                .collect();
            Some(DeimRom {
                projector,
                sites,
                selected: d.indices.clone(),
            })
        }
    };

    let slices = model
        .slices
        .iter()
        .map(|slice| {
            let e_r = &pair.l_r * slice.e.mul_dense(&pair.v_r);
            let a_r = &pair.l_r * slice.a.mul_dense(&pair.v_r);
            let b_r = slice.b.pre_mul_dense(&pair.l_r);
            let c_r = slice.c.mul_dense(&pair.v_r);
            let d = slice.d.to_dense();
            let deim_entries = match (&deim_rom, &slice.f) {
                (Some(rom), Some(f)) => rom
                    .selected
                    .iter()
                    .map(|&idx| {
                        let n = model.map.n();
                        let species1 = idx % n;
                        f.entries
                            .iter()
                            .position(|e| e.i1 == species1)
                            .ok_or_else(|| {
                                MorError::Setup(format!(
                                    "DEIM index {idx} is outside the bilinear support"
                                ))
                            })
                    })
                    .collect::<Result<Vec<_>, _>>()?,
                _ => Vec::new(),
            };
            let e_lu = e_r.clone().lu();
            Ok(RomSlice {
                e_r,
                a_r,
                b_r,
                c_r,
                d,
                e_lu,
                deim_entries,
            })
        })
        .collect::<Result<Vec<_>, MorError>>()?;

    Ok(ReducedModel {
        slices,
        slice_of_step: model.slice_of_step.clone(),
        dt_s: model.dt_s,
        n_r,
        v_r: pair.v_r.clone(),
        l_r: pair.l_r.clone(),
        map: model.map.clone(),
        n_u1: model.n_u1,
        n_u2: model.n_u2,
        const_channel: model.const_channel,
        n_y1: model.n_y1,
        n_y2: model.n_y2,
        shift: model.shift.clone(),
        deim: deim_rom,
        full_f: is_bilinear && deim.is_none(),
    })
}
