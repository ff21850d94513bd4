//! Command-line driver: run experiments, tabulate costs, compare rewind
//! metrics, and inspect packets.

mod ablate;
mod config;
mod cost;
mod dump;
mod parse;
mod run;

use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "partup", version, about = "Weight-wise partial updating simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a (method, seed) grid and export CSVs, packets, and a summary.
    Run(run::RunArgs),
    /// Emit analytic communication-cost tables, no training involved.
    Cost(cost::CostArgs),
    /// Compare rewound losses under different selection metrics.
    AblateRewind(ablate::AblateArgs),
    /// Pretty-print one encoded update packet.
    DumpPacket(dump::DumpArgs),
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    init_workers()?;
    match cli.command {
        Command::Run(args) => run::cmd_run(&args),
        Command::Cost(args) => cost::cmd_cost(&args),
        Command::AblateRewind(args) => ablate::cmd_ablate(&args),
        Command::DumpPacket(args) => dump::cmd_dump(&args),
    }
}

/// PARTUP_WORKERS caps the pool that (method, seed) cells fan out on.
fn init_workers() -> Result<()> {
    let Ok(raw) = std::env::var("PARTUP_WORKERS") else {
        return Ok(());
    };
    let workers: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("PARTUP_WORKERS {raw:?} is not an integer"))?;
    if workers == 0 {
        bail!("PARTUP_WORKERS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .context("building the worker pool")?;
    Ok(())
}
