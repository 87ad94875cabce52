//! Full-order multi-species dynamics: per-hydraulic-step assembly of the
//! `E x(t+dt) = A x(t) + B u(t) + f(x)` system and its simulation.

mod assemble;
mod augment;
mod model;
mod sim;

pub use assemble::{assemble, assemble_model};
pub use augment::shift_initial_conditions;
pub use model::{BilinearEntry, FullOrderModel, ModelSlice, NonlinearTerm};
pub use sim::{scenario_inputs, simulate, step, step_full, InputSchedule, Trajectory};

use thiserror::Error;

use crate::error::ErrorClass;
use crate::sparse::SparseError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("CFL violation in pipe '{pipe}': Courant number {lambda:.4} exceeds 1 (explicit scheme)")]
    CflViolation { pipe: String, lambda: f64 },
    #[error("junction '{node}' has zero outflow and demand; mixing is undefined")]
    DegenerateJunction { node: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("model is already in shifted coordinates")]
    AlreadyAugmented,
    #[error("internal error: {0}")]
    Internal(String),
    #[error("internal error: {0}")]
    Sparse(#[from] SparseError),
}

impl ModelError {
    pub fn class(&self) -> ErrorClass {
        match self {
            ModelError::CflViolation { .. }
            | ModelError::DegenerateJunction { .. }
            | ModelError::DimensionMismatch { .. }
            | ModelError::AlreadyAugmented => ErrorClass::Validation,
            ModelError::NonFinite { .. } | ModelError::Internal(_) | ModelError::Sparse(_) => {
                ErrorClass::Numerical
            }
        }
    }
}
