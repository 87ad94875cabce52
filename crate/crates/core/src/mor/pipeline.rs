//! End-to-end reduction pipelines: linearize/shift as needed, collect
//! snapshots, build the transform, project the model.

use nalgebra::DVector;

use crate::dynamics::{
    scenario_inputs, shift_initial_conditions, simulate, FullOrderModel, InputSchedule,
};
use crate::linearize::{build_ldes, update_operating_points, OperatingSchedule, OpUpdatePolicy};
use crate::network::{
    DeviceLayout, HydraulicProfile, NetworkGraph, ScenarioConfig, SegmentationPlan,
};

use super::bpod::{bpod_transform, collect_adjoint_snapshots, min_snapshot_length, AdjointOptions};
use super::deim::{greedy_deim, DeimData};
use super::pod::pod_transform;
use super::reduce::{reduce_model, ReducedModel};
use super::snapshots::{collect_state_snapshots, Excitation};
use super::{numerical_rank, MorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorMethod {
    /// POD on the linearized model.
    Lpod,
    /// Balanced POD on the linearized model.
    Bpod,
    /// POD on the nonlinear model with DEIM for the bilinear term.
    Nlpod,
}

impl MorMethod {
    pub fn tag(self) -> &'static str {
        match self {
            MorMethod::Lpod => "lpod",
            MorMethod::Bpod => "bpod",
            MorMethod::Nlpod => "nlpod",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lpod" => Some(MorMethod::Lpod),
            "bpod" => Some(MorMethod::Bpod),
            "nlpod" => Some(MorMethod::Nlpod),
            _ => None,
        }
    }
}

/// Reduction request; `None` fields fall back to scenario-driven defaults.
#[derive(Debug, Clone, Default)]
pub struct RomRecipe {
    pub n_r: Option<usize>,
    /// Snapshot steps per run; defaults to the a-priori bound times the
    /// scenario snapshot factor (POD) or the bound itself (BPOD).
    pub m: Option<usize>,
    pub excitation: Option<Excitation>,
    /// Operating schedule for the linearized paths; defaults to sampling a
    /// nonlinear pre-run at the policy's refresh times.
    pub schedule: Option<OperatingSchedule>,
}

pub struct MorPipelineOutput {
    pub method: MorMethod,
    pub rom: ReducedModel,
    /// The shifted full-order model the reduced one approximates; simulate
    /// it from zero with the same inputs to score the reduction.
    pub reference: FullOrderModel,
    pub n_r: usize,
    pub m_lower: usize,
    pub deim: Option<DeimData>,
    pub schedule: Option<OperatingSchedule>,
}

/// Snapshot steps per run: the a-priori bound scaled by the configured
/// factor, floored so short toy networks still produce enough columns for
/// the requested order.
fn default_snapshot_len(m_lower: usize, factor: f64, n_r: Option<usize>) -> usize {
    (((m_lower as f64) * factor).ceil() as usize).max(minimum_snapshot_floor(n_r))
}

fn minimum_snapshot_floor(n_r: Option<usize>) -> usize {
    16.max(2 * n_r.unwrap_or(0))
}

/// Operating schedule sampled from a nonlinear pre-run: initial window from
/// the initial state, an early refresh, then one refresh per policy window.
pub fn schedule_from_prerun(
    base: &FullOrderModel,
    graph: &NetworkGraph,
    layout: &DeviceLayout,
    profile: &HydraulicProfile,
    scenario: &ScenarioConfig,
    x0: &DVector<f64>,
) -> Result<OperatingSchedule, MorError> {
    let policy = OpUpdatePolicy {
        window_s: scenario.mor.op_window_s,
        early_update_delay_s: scenario.mor.op_early_update_s,
        threshold_mg_l: scenario.mor.op_threshold_mg_l,
    };
    let n_steps = scenario.n_wq_steps();
    let inputs = scenario_inputs(base, graph, layout, profile, scenario, n_steps);
    let stride = (policy.early_update_delay_s / base.dt_s).round().max(1.0) as usize;
    let traj = simulate(base, x0, &inputs, n_steps, stride)?;

    let mut schedule = update_operating_points(
        &OperatingSchedule::zero(policy, base.map.reaction_sites().len()),
        &base.map,
        x0,
        0.0,
    );
    for t in schedule.planned_refresh_times(scenario.horizon_s) {
        let step = (t / base.dt_s).round() as usize;
        let step = (step / stride) * stride;
        schedule = update_operating_points(&schedule, &base.map, traj.state_at(step), t);
    }
    Ok(schedule)
}

/// Build a reduced model for the scenario with the requested method.
///
/// `base` must be the raw (unshifted) full-order model of the scenario;
/// shifting and linearization happen internally.
pub fn build_rom(
    base: &FullOrderModel,
    graph: &NetworkGraph,
    plan: &SegmentationPlan,
    layout: &DeviceLayout,
    profile: &HydraulicProfile,
    scenario: &ScenarioConfig,
    method: MorMethod,
    recipe: &RomRecipe,
) -> Result<MorPipelineOutput, MorError> {
    let x0 = scenario
        .initial_state(graph, &base.map)
        .map_err(|e| MorError::Setup(e.to_string()))?;
    let m_lower = min_snapshot_length(graph, plan, profile, layout)?;

    match method {
        MorMethod::Lpod | MorMethod::Bpod => {
            let schedule = match &recipe.schedule {
                Some(s) => s.clone(),
                None => schedule_from_prerun(base, graph, layout, profile, scenario, &x0)?,
            };
            let lde = build_ldes(base, &schedule)?;
            let reference = shift_initial_conditions(&lde.model, &x0)?;

            let rom = if method == MorMethod::Lpod {
                let m = recipe.m.unwrap_or_else(|| {
                    default_snapshot_len(m_lower, scenario.mor.snapshot_factor, recipe.n_r)
                });
                let excitation = recipe.excitation.clone().unwrap_or_else(|| {
                    Excitation::default_impulses(&reference, scenario.mor.booster_impulse_gain)
                });
                let snaps = collect_state_snapshots(&reference, &excitation, m, false)?;
                let n_r = match recipe.n_r {
                    Some(r) => r,
                    None => numerical_rank(&snaps),
                };
                let pair = pod_transform(&snaps, n_r)?;
                reduce_model(&reference, &pair, None)?
            } else {
                let m = recipe
                    .m
                    .unwrap_or_else(|| m_lower.max(minimum_snapshot_floor(recipe.n_r)));
                let excitation = recipe.excitation.clone().unwrap_or_else(|| {
                    Excitation::default_impulses(&reference, scenario.mor.booster_impulse_gain)
                });
                let snaps = collect_state_snapshots(&reference, &excitation, m, false)?;
                let adjoint = collect_adjoint_snapshots(
                    &reference,
                    m,
                    &AdjointOptions::for_layout(&reference, layout),
                )?;
                let pair = bpod_transform(&snaps.x, &adjoint, recipe.n_r.unwrap_or(usize::MAX))?;
                reduce_model(&reference, &pair, None)?
            };
            Ok(MorPipelineOutput {
                method,
                n_r: rom.n_r,
                rom,
                reference,
                m_lower,
                deim: None,
                schedule: Some(schedule),
            })
        }
        MorMethod::Nlpod => {
            let reference = shift_initial_conditions(base, &x0)?;
            let m = recipe.m.unwrap_or_else(|| {
                default_snapshot_len(m_lower, scenario.mor.snapshot_factor, recipe.n_r)
            });
            let excitation = recipe.excitation.clone().unwrap_or_else(|| {
                Excitation::default_impulses(&reference, scenario.mor.booster_impulse_gain)
            });
            let snaps = collect_state_snapshots(&reference, &excitation, m, true)?;
            let n_r = match recipe.n_r {
                Some(r) => r,
                None => numerical_rank(&snaps),
            };
            let pair = pod_transform(&snaps, n_r)?;
            let f_snaps = snaps.f.as_ref().expect("nonlinear snapshots");
            // The interpolation order is capped by the rank of the
            // nonlinear-term snapshots.
            let f_rank = {
                let probe = super::SnapshotSet {
                    x: f_snaps.clone(),
                    f: None,
                    p: None,
                    m: snaps.m,
                    excitation: String::new(),
                };
                numerical_rank(&probe)
            };
            // A rank-zero bilinear snapshot means the term never fired in
            // the data (single-species excitation or k_r = 0); the reduced
            // model then evaluates it directly.
            let deim = if f_rank == 0 {
                None
            } else {
                Some(greedy_deim(f_snaps, n_r.min(f_rank).max(1))?)
            };
            let rom = reduce_model(&reference, &pair, deim.as_ref())?;
            Ok(MorPipelineOutput {
                method,
                n_r: rom.n_r,
                rom,
                reference,
                m_lower,
                deim,
                schedule: None,
            })
        }
    }
}

/// Score a reduction: simulate the reference and the ROM from rest under the
/// scenario inputs and return (reference outputs, ROM outputs, RMSE).
pub fn evaluate_rom(
    out: &MorPipelineOutput,
    graph: &NetworkGraph,
    layout: &DeviceLayout,
    profile: &HydraulicProfile,
    scenario: &ScenarioConfig,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>, f64), MorError> {
    let n_steps = scenario.n_wq_steps();
    let inputs = scenario_inputs(&out.reference, graph, layout, profile, scenario, n_steps);
    evaluate_rom_with_inputs(out, &inputs, n_steps)
}

/// Same as [`evaluate_rom`] with explicit inputs.
pub fn evaluate_rom_with_inputs(
    out: &MorPipelineOutput,
    inputs: &InputSchedule,
    n_steps: usize,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>, f64), MorError> {
    let x_hat0 = DVector::zeros(out.reference.n());
    let ref_traj = simulate(&out.reference, &x_hat0, inputs, n_steps, n_steps.max(1))?;
    let rom_traj = out
        .rom
        .simulate(&out.reference, &DVector::zeros(out.rom.n_r), inputs, n_steps)?;
    let err = super::rmse(&ref_traj.outputs, &rom_traj.outputs)?;
    Ok((ref_traj.outputs, rom_traj.outputs, err))
}
