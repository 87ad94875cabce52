//! Crate-wide error type and the coarse classification used for exit codes.

use thiserror::Error;

use crate::control::ControlError;
use crate::dynamics::ModelError;
use crate::linearize::LinearizeError;
use crate::mor::MorError;
use crate::network::NetworkError;

/// Coarse error class; the CLI maps these onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad or inconsistent input data (exit code 2).
    Validation,
    /// A numerical procedure failed or diverged (exit code 3).
    Numerical,
    /// The request names functionality deliberately not implemented (exit code 4).
    OutOfScope,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Mor(#[from] MorError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
    /// Reaction models the framework enumerates but this artifact does not build.
    #[error("{0}")]
    OutOfScope(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Network(_) | Error::Format(_) | Error::Io(_) => ErrorClass::Validation,
            Error::Model(e) => e.class(),
            Error::Linearize(_) => ErrorClass::Validation,
            Error::Mor(e) => e.class(),
            Error::Control(e) => e.class(),
            Error::OutOfScope(_) => ErrorClass::OutOfScope,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
