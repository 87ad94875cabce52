//! Network topology, hydraulics, device layout, and scenario configuration.
//!
//! Everything here is pure construction: parse, validate, and produce the
//! immutable inputs the dynamics assembly consumes. All quantities are held
//! in the crate's internal units (m, s, mg/L, L, L/s); file formats use the
//! SI units declared in their headers and are converted on load.

mod graph;
mod hydraulics;
mod index;
mod layout;
mod scenario;
mod segments;

pub use graph::{parse_network, Link, LinkKind, NetworkGraph, Node, NodeKind};
pub use hydraulics::{
    constant_profile, parse_hydraulics, validate_hydraulics, HydraulicDiagnostic, HydraulicProfile,
    HydraulicStep, ViolationKind,
};
pub use index::{state_index_map, LinkStates, StateElement, StateIndexMap};
pub use layout::DeviceLayout;
pub use scenario::{
    ControlSettings, Disturbance, InitialOverride, IntrusionEvent, MorSettings, ReactionKind,
    ReactionParams, ScenarioConfig, Scheme, SourceSpec, Species,
};
pub use segments::{segmentize, PipeSegmentation, SegmentationPlan};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("link '{link}' references missing node '{node}'")]
    DanglingNode { link: String, node: String },
    #[error("duplicate id '{id}'")]
    DuplicateId { id: String },
    #[error("link '{link}' connects node '{node}' to itself")]
    SelfLoop { link: String, node: String },
    #[error("pipe '{link}' has nonpositive {what}")]
    NonpositiveGeometry { link: String, what: &'static str },
    #[error("no source node: network needs at least one reservoir or tank")]
    NoSource,
    #[error("tank entry references node '{node}' which is not a tank")]
    TankMismatch { node: String },
    #[error("tank '{node}' is missing its initial volume")]
    MissingTankVolume { node: String },
    #[error("unknown element id '{id}'")]
    UnknownElement { id: String },
    #[error("hydraulics: {message}")]
    Hydraulics { message: String },
    #[error("scenario: {message}")]
    Scenario { message: String },
    #[error("segmentation: {message}")]
    Segmentation { message: String },
}
