//! Receding-horizon chlorine regulation on the reduced models: the QP over
//! the linearized ROM and the McCormick-relaxed QP over the nonlinear ROM.

mod augmented;
mod loop_;
mod mccormick;
mod mpc;
mod qp;

pub use augmented::{augment_system, compose_interval, AugmentedSystem, IntervalModel};
pub use loop_::{closed_loop_run, ClosedLoopLog, ClosedLoopRecord, EnvelopeAudit};
pub use mccormick::{build_envelopes, tighten_x2_caps, McCormickEnvelope};
pub use mpc::{ControlAction, ControlConfig, Controller, ControllerKind};
pub use qp::{solve_qp, QpProblem, QpSettings, QpSolution, QpStatus};

use thiserror::Error;

use crate::error::ErrorClass;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("{0}")]
    Setup(String),
    #[error("inverted box [{x1_min}, {x1_max}] x [{x2_min}, {x2_max}]")]
    InvertedBox {
        x1_min: f64,
        x1_max: f64,
        x2_min: f64,
        x2_max: f64,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Model(#[from] crate::dynamics::ModelError),
    #[error(transparent)]
    Mor(#[from] crate::mor::MorError),
}

impl ControlError {
    pub fn class(&self) -> ErrorClass {
        match self {
            ControlError::Setup(_) | ControlError::InvertedBox { .. } => ErrorClass::Validation,
            ControlError::Numerical(_) => ErrorClass::Numerical,
            ControlError::Model(e) => e.class(),
            ControlError::Mor(e) => e.class(),
        }
    }
}

#[cfg(test)]
mod tests;
