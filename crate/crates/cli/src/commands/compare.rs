//! `mswqm compare`: per-channel error and timing report across two runs
//! made from identical inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;

use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// First run directory.
    #[arg(long)]
    pub a: PathBuf,
    /// Second run directory.
    #[arg(long)]
    pub b: PathBuf,
    /// Report directory (defaults to stdout only).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_outputs(dir: &Path) -> anyhow::Result<BTreeMap<String, Vec<(f64, f64)>>> {
    let path = dir.join("outputs.csv");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("cannot read '{}'", path.display()))?;
    let mut channels: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(t), Some(sensor), Some(v)) = (parts.next(), parts.next(), parts.next()) else {
            continue;
        };
        channels
            .entry(sensor.to_string())
            .or_default()
            .push((t.parse()?, v.parse()?));
    }
    Ok(channels)
}

pub fn run(args: CompareArgs) -> anyhow::Result<()> {
    let ma = RunManifest::read(&args.a)?;
    let mb = RunManifest::read(&args.b)?;
    if ma.inputs != mb.inputs {
        anyhow::bail!(mswqm_core::Error::Format(format!(
            "refusing to compare runs with different inputs:\n{}",
            ma.diff(&mb)
        )));
    }

    let ya = load_outputs(&args.a)?;
    let yb = load_outputs(&args.b)?;

    let mut report = String::from("channel,n,rmse,max_abs_err\n");
    let mut human = Vec::new();
    for (channel, series_a) in &ya {
        let Some(series_b) = yb.get(channel) else {
            continue;
        };
        let n = series_a.len().min(series_b.len());
        if n == 0 {
            continue;
        }
        let mut sum_sq = 0.0;
        let mut max_abs: f64 = 0.0;
        for k in 0..n {
            let d = series_a[k].1 - series_b[k].1;
            sum_sq += d * d;
            max_abs = max_abs.max(d.abs());
        }
        let rmse = (sum_sq / n as f64).sqrt();
        report.push_str(&format!("{channel},{n},{rmse:.6e},{max_abs:.6e}\n"));
        human.push(format!("{channel:<24} rmse {rmse:>12.4e}   max {max_abs:>12.4e}"));
    }

    println!(
        "run A: {} ({:.1} ms)   run B: {} ({:.1} ms)",
        ma.subcommand, ma.wall_ms, mb.subcommand, mb.wall_ms
    );
    for line in &human {
        println!("{line}");
    }

    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("compare.csv"), report)?;
        let mut manifest = RunManifest::new("compare");
        manifest.set("a", args.a.display());
        manifest.set("b", args.b.display());
        manifest.outputs.push("compare.csv".to_string());
        manifest.write(out)?;
    }
    Ok(())
}
