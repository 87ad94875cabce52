//! Model order reduction: POD and balanced POD transforms built from
//! snapshots, DEIM interpolation of the bilinear term, projected reduced
//! models, and the RMSE metric used to score them.

mod bpod;
mod deim;
mod pipeline;
mod pod;
mod reduce;
mod snapshots;

pub use bpod::{bpod_transform, collect_adjoint_snapshots, min_snapshot_length, AdjointOptions};
pub use deim::{greedy_deim, DeimData};
pub use pipeline::{
    build_rom, evaluate_rom, evaluate_rom_with_inputs, schedule_from_prerun, MorMethod,
    MorPipelineOutput, RomRecipe,
};
pub use pod::{numerical_rank, pod_transform, pod_via_large_gramian, pod_via_small_gramian, TransformPair};
pub use reduce::{reduce_model, ReducedModel, RomTrajectory};
pub use snapshots::{collect_state_snapshots, Excitation, SnapshotSet};

use nalgebra::DVector;
use thiserror::Error;

use crate::error::ErrorClass;

#[derive(Debug, Error)]
pub enum MorError {
    #[error("requested order {requested} exceeds numerical rank {rank}")]
    RankExceeded { requested: usize, rank: usize },
    #[error("snapshot matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("non-finite state at snapshot step {step}; excitation run diverged")]
    NonFinite { step: usize },
    #[error("sensor '{sensor}' unreachable from '{origin}' under the flow directions of hydraulic step {step}")]
    Unreachable {
        origin: String,
        sensor: String,
        step: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0}")]
    Setup(String),
    #[error(transparent)]
    Model(#[from] crate::dynamics::ModelError),
    #[error(transparent)]
    Linearize(#[from] crate::linearize::LinearizeError),
}

impl MorError {
    pub fn class(&self) -> ErrorClass {
        match self {
            MorError::Unreachable { .. } | MorError::Setup(_) | MorError::DimensionMismatch { .. } => {
                ErrorClass::Validation
            }
            MorError::Model(e) => e.class(),
            MorError::Linearize(_) => ErrorClass::Validation,
            _ => ErrorClass::Numerical,
        }
    }
}

/// Root-mean-square output error over a run:
/// `sqrt(1/N * sum_j ||y(j) - y_hat(j)||^2)`.
///
/// Both runs must have applied the same inputs.
pub fn rmse(y_ref: &[DVector<f64>], y_approx: &[DVector<f64>]) -> Result<f64, MorError> {
    if y_ref.len() != y_approx.len() {
        return Err(MorError::DimensionMismatch {
            expected: y_ref.len(),
            got: y_approx.len(),
        });
    }
    if y_ref.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = y_ref
        .iter()
        .zip(y_approx)
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    Ok((sum / y_ref.len() as f64).sqrt())
}

#[cfg(test)]
mod tests;
