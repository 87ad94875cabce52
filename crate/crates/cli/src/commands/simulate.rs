//! `mswqm simulate`: run the full-order (or linearized) model and export
//! the trajectory, outputs, and manifest.

use std::time::Instant;

use clap::Args;
use mswqm_core::dynamics::{scenario_inputs, simulate};
use mswqm_core::io;
use mswqm_core::linearize::{build_ldes, OperatingSchedule, OpUpdatePolicy};
use mswqm_core::mor::schedule_from_prerun;

use crate::load::{ensure_out_dir, InputArgs};
use crate::manifest::RunManifest;
use crate::route;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Simulate the Taylor-linearized model instead of the bilinear one.
    #[arg(long)]
    pub linearized: bool,
    /// Record full states every N steps.
    #[arg(long, default_value_t = 60)]
    pub state_stride: usize,
    /// Seed recorded in the manifest (synthetic scenarios only).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: SimulateArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let case = args.inputs.load()?;
    // Reject out-of-scope reaction models up front.
    route::route(case.scenario.reaction.kind, None, false, false)?;

    let mut manifest = RunManifest::new("simulate");
    args.inputs.register_inputs(&mut manifest)?;
    manifest.seed = args.seed;
    manifest.set("linearized", args.linearized);
    manifest.set("state_stride", args.state_stride);
    manifest.set("scheme", format!("{:?}", case.scenario.scheme));

    let model = case.assemble()?;
    let n_steps = case.scenario.n_wq_steps();
    let x0 = case
        .scenario
        .initial_state(&case.graph, &model.map)
        .map_err(mswqm_core::Error::from)?;
    let inputs = scenario_inputs(
        &model,
        &case.graph,
        &case.layout,
        &case.profile,
        &case.scenario,
        n_steps,
    );

    ensure_out_dir(&args.inputs.out)?;
    let labels = io::sensor_labels(&case.graph, &case.layout);

    let trajectory = if args.linearized {
        if !case.scenario.reaction.kind.is_bilinear() {
            anyhow::bail!(mswqm_core::Error::Format(
                "--linearized needs the bilinear reaction model".to_string()
            ));
        }
        let schedule: OperatingSchedule = schedule_from_prerun(
            &model,
            &case.graph,
            &case.layout,
            &case.profile,
            &case.scenario,
            &x0,
        )
        .map_err(mswqm_core::Error::from)?;
        let lde = build_ldes(&model, &schedule).map_err(mswqm_core::Error::from)?;
        let mut file = std::fs::File::create(args.inputs.out.join("opschedule.csv"))?;
        io::write_schedule_csv(&mut file, &case.graph, &case.map, &schedule)?;
        manifest.outputs.push("opschedule.csv".to_string());
        manifest.set(
            "op_policy",
            format!(
                "window={}s early={}s threshold={}mg/L",
                OpUpdatePolicy::default().window_s,
                case.scenario.mor.op_early_update_s,
                case.scenario.mor.op_threshold_mg_l
            ),
        );
        simulate(&lde.model, &x0, &inputs, n_steps, args.state_stride)
            .map_err(mswqm_core::Error::from)?
    } else {
        simulate(&model, &x0, &inputs, n_steps, args.state_stride)
            .map_err(mswqm_core::Error::from)?
    };

    let mut file = std::fs::File::create(args.inputs.out.join("trajectory.csv"))?;
    io::write_trajectory_csv(&mut file, &case.graph, &case.map, &trajectory, &labels)?;
    let mut file = std::fs::File::create(args.inputs.out.join("outputs.csv"))?;
    io::write_outputs_csv(&mut file, trajectory.dt_s, &labels, &trajectory.outputs)?;

    manifest.outputs.push("trajectory.csv".to_string());
    manifest.outputs.push("outputs.csv".to_string());
    manifest.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    manifest.write(&args.inputs.out)?;
    println!(
        "simulated {} steps ({} states) in {:.1} ms",
        n_steps,
        model.n(),
        manifest.wall_ms
    );
    Ok(())
}
