//! Multi-species water quality dynamics for drinking water networks.
//!
//! The crate models chlorine plus one reactive contaminant ("fictitious
//! reactant") transported through a distribution network, builds the
//! time-varying state-space system for explicit/implicit upwind transport
//! discretizations, reduces it with POD / balanced POD / DEIM, and regulates
//! chlorine booster injections with a receding-horizon QP controller that
//! relaxes the bilinear mutual-reaction term via McCormick envelopes.
//!
//! Pipeline, bottom up:
//!
//! * [`network`] — topology, hydraulics, devices, segmentation, state indexing
//! * [`dynamics`] — per-hydraulic-step matrix assembly and full-order simulation
//! * [`linearize`] — Taylor linearization of the mutual reaction around
//!   scheduled operating points
//! * [`mor`] — snapshot collection, POD/BPOD transforms, DEIM interpolation,
//!   reduced-order models
//! * [`control`] — McCormick envelopes, the velocity-form augmented system,
//!   an ADMM QP solver, and the closed control loop
//! * [`io`] — CSV trajectory/log export and binary snapshot/transform caches

pub mod control;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod linearize;
pub mod mor;
pub mod network;
pub mod sparse;
pub mod testnets;

pub use error::{Error, ErrorClass};
