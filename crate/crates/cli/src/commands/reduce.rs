//! `mswqm reduce`: build reduced models with the requested method over a
//! sweep of orders, score each against its full-order reference, and cache
//! the transforms.

use std::time::Instant;

use clap::Args;
use mswqm_core::io::cache;
use mswqm_core::mor::{build_rom, evaluate_rom, min_snapshot_length, MorMethod, RomRecipe};

use crate::load::{ensure_out_dir, InputArgs};
use crate::manifest::RunManifest;
use crate::route;

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Reduction method.
    #[arg(long, value_parser = ["lpod", "bpod", "nlpod"])]
    pub method: String,
    /// Reduced orders to build, comma separated; empty means numerical rank.
    #[arg(long, value_delimiter = ',')]
    pub nr: Vec<usize>,
    /// Snapshot steps per run (default: the a-priori bound times the
    /// scenario snapshot factor).
    #[arg(long)]
    pub snapshot_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: ReduceArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    let case = args.inputs.load()?;
    let method = MorMethod::parse(&args.method)
        .ok_or_else(|| mswqm_core::Error::Format(format!("unknown method '{}'", args.method)))?;
    route::route(
        case.scenario.reaction.kind,
        Some(method),
        false,
        false,
    )?;

    let mut manifest = RunManifest::new("reduce");
    args.inputs.register_inputs(&mut manifest)?;
    manifest.seed = args.seed;
    manifest.set("method", method.tag());
    manifest.set(
        "nr",
        if args.nr.is_empty() {
            "rank".to_string()
        } else {
            args.nr.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        },
    );

    let model = case.assemble()?;
    let m_lower =
        min_snapshot_length(&case.graph, &case.plan, &case.profile, &case.layout)
            .map_err(mswqm_core::Error::from)?;
    ensure_out_dir(&args.inputs.out)?;

    let orders: Vec<Option<usize>> = if args.nr.is_empty() {
        vec![None]
    } else {
        args.nr.iter().map(|&v| Some(v)).collect()
    };

    let mut sweep = String::from("method,n_r,rmse,m_lower,wall_ms\n");
    for order in orders {
        let t0 = Instant::now();
        let recipe = RomRecipe {
            n_r: order,
            m: args.snapshot_steps,
            excitation: None,
            schedule: None,
        };
        let out = build_rom(
            &model,
            &case.graph,
            &case.plan,
            &case.layout,
            &case.profile,
            &case.scenario,
            method,
            &recipe,
        )
        .map_err(mswqm_core::Error::from)?;
        let (_, _, rmse) = evaluate_rom(&out, &case.graph, &case.layout, &case.profile, &case.scenario)
            .map_err(mswqm_core::Error::from)?;
        let wall = t0.elapsed().as_secs_f64() * 1e3;
        sweep.push_str(&format!(
            "{},{},{:.6e},{},{:.1}\n",
            method.tag(),
            out.n_r,
            rmse,
            m_lower,
            wall
        ));

        let pair = mswqm_core::mor::TransformPair {
            v_r: out.rom.v_r.clone(),
            l_r: out.rom.l_r.clone(),
            retained: nalgebra::DVector::from_element(out.n_r, f64::NAN),
        };
        let name = format!("transform_{}_nr{}.bin", method.tag(), out.n_r);
        let mut file = std::fs::File::create(args.inputs.out.join(&name))?;
        cache::write_transform(&mut file, method, &pair, out.deim.as_ref())?;
        manifest.outputs.push(name);
        println!(
            "{} n_r={} rmse={:.3e} ({:.1} ms)",
            method.tag(),
            out.n_r,
            rmse,
            wall
        );
    }

    std::fs::write(args.inputs.out.join("rmse_sweep.csv"), sweep)?;
    manifest.outputs.push("rmse_sweep.csv".to_string());
    manifest.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    manifest.write(&args.inputs.out)?;
    Ok(())
}
