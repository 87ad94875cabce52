//! `mswqm` — simulate, reduce, and control multi-species water quality
//! dynamics on a distribution network.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure,
//! 4 out-of-scope request. Log level via `MSWQM_LOG`.

mod commands;
mod load;
mod manifest;
mod route;

use clap::{Parser, Subcommand};
use mswqm_core::ErrorClass;

#[derive(Debug, Parser)]
#[command(name = "mswqm", version, about)]
struct Cli {
    /// Cap for internal parallelism (rayon threads).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the full-order (or linearized) model and export trajectories.
    Simulate(commands::simulate::SimulateArgs),
    /// Build reduced-order models and score them against the full model.
    Reduce(commands::reduce::ReduceArgs),
    /// Run the closed control loop on the nonlinear plant.
    Control(commands::control::ControlArgs),
    /// Compare two runs channel by channel.
    Compare(commands::compare::CompareArgs),
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("MSWQM_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
        {
            eprintln!("warning: could not cap threads: {e}");
        }
    }

    let result = match cli.command {
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Reduce(args) => commands::reduce::run(args),
        Command::Control(args) => commands::control::run(args),
        Command::Compare(args) => commands::compare::run(args),
    };

    match result {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<mswqm_core::Error>()
                .map(|e| match e.class() {
                    ErrorClass::Validation => 2,
                    ErrorClass::Numerical => 3,
                    ErrorClass::OutOfScope => 4,
                })
                .or_else(|| err.downcast_ref::<route::RouteError>().map(|e| e.exit_code()))
                .unwrap_or(2);
            std::process::exit(code);
        }
    }
}
