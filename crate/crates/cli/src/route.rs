//! Map reaction models onto pipelines: the linear models ride the balanced
//! reduction and linear controller, the bilinear one picks either the
//! nonlinear reduction with the relaxed controller or the linearize-first
//! path.

use mswqm_core::control::ControllerKind;
use mswqm_core::mor::MorMethod;
use mswqm_core::network::ReactionKind;

#[derive(Debug)]
pub enum RouteError {
    OutOfScope(ReactionKind),
    ExtensionPoint(ReactionKind, &'static str),
    BadCombination(String),
}

impl std::fmt::Display for RouteError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RouteError::OutOfScope(kind) => write!(
                f,
                "{kind:?} (nth-order kinetics) is out of scope: the generalized framework \
                 sketches only a quadratic approximation / piecewise-linear relaxation for it"
            ),
            RouteError::ExtensionPoint(kind, how) => {
                write!(f, "{kind:?} is an extension point: {how}")
            }
            RouteError::BadCombination(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for RouteError {}

impl RouteError {
    pub fn exit_code(&self) -> i32 {
        4
    }
}

/// A resolved pipeline: which reduction feeds which controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelinePlan {
    pub method: MorMethod,
    pub controller: ControllerKind,
}

/// Resolve the reaction model and user flags into a pipeline.
pub fn route(
    kind: ReactionKind,
    method: Option<MorMethod>,
    relaxed: bool,
    single_species: bool,
) -> Result<PipelinePlan, RouteError> {
    match kind {
        ReactionKind::M5 | ReactionKind::M6 => return Err(RouteError::OutOfScope(kind)),
        ReactionKind::M3 => {
            return Err(RouteError::ExtensionPoint(
                kind,
                "split the fast/slow components into two stacked first-order species and run \
                 the linear path per component",
            ))
        }
        ReactionKind::M4 => {
            return Err(RouteError::ExtensionPoint(
                kind,
                "treat the fast/slow reactants as the fictitious component of the second-order \
                 model and run the bilinear machinery per reactant",
            ))
        }
        ReactionKind::M8 => {
            return Err(RouteError::ExtensionPoint(
                kind,
                "each reactant contributes one more stacked species block; the bilinear \
                 machinery applies per reactant with its own rate",
            ))
        }
        ReactionKind::M1 | ReactionKind::M2 | ReactionKind::M7 => {}
    }

    if single_species {
        return Ok(PipelinePlan {
            method: method.unwrap_or(MorMethod::Bpod),
            controller: ControllerKind::SingleSpecies,
        });
    }
    match kind {
        ReactionKind::M1 | ReactionKind::M2 => {
            if relaxed {
                return Err(RouteError::BadCombination(
                    "the relaxed controller needs the bilinear reaction model".to_string(),
                ));
            }
            let method = method.unwrap_or(MorMethod::Bpod);
            if method == MorMethod::Nlpod {
                return Err(RouteError::BadCombination(
                    "nonlinear reduction needs the bilinear reaction model".to_string(),
                ));
            }
            Ok(PipelinePlan {
                method,
                controller: ControllerKind::Linearized,
            })
        }
        ReactionKind::M7 => {
            if relaxed {
                let method = method.unwrap_or(MorMethod::Nlpod);
                if method != MorMethod::Nlpod {
                    return Err(RouteError::BadCombination(
                        "the relaxed controller runs on the nonlinear reduction".to_string(),
                    ));
                }
                Ok(PipelinePlan {
                    method,
                    controller: ControllerKind::Relaxed,
                })
            } else {
                Ok(PipelinePlan {
                    method: method.unwrap_or(MorMethod::Bpod),
                    controller: ControllerKind::Linearized,
                })
            }
        }
        _ => unreachable!(),
    }
}
