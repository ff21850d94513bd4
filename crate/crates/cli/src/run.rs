//! `run`: execute the (method, seed) grid and export per-run CSVs, packet
//! traces, and an aggregate JSON summary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use partup::{
    ensure_fresh, mean_std, run_experiment, write_round_csv, ExperimentConfig, Method, RoundLog,
    RunOutput,
};

use crate::config::Manifest;
use crate::parse;

#[derive(Args)]
pub struct RunArgs {
    /// Experiment manifest (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Comma-separated seeds; a..b ranges are inclusive.
    #[arg(long, default_value = "1")]
    pub seeds: String,
    /// Comma-separated subset of dpu,gcpu,rpu,fu.
    #[arg(long, default_value = "dpu")]
    pub methods: String,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Serialize)]
struct Summary {
    config: String,
    seeds: Vec<u64>,
    methods: Vec<MethodSummary>,
}

#[derive(Serialize)]
struct MethodSummary {
    method: &'static str,
    per_round: Vec<RoundSummary>,
    total_bytes_mean: f64,
    final_test_acc_mean: f64,
    final_test_acc_std: f64,
}

#[derive(Serialize)]
struct RoundSummary {
    round: usize,
    train_loss_mean: f64,
    train_loss_std: f64,
    val_acc_mean: f64,
    val_acc_std: f64,
    test_acc_mean: f64,
    test_acc_std: f64,
    bytes_mean: f64,
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let manifest = Manifest::load(&args.config)?;
    let methods = parse::methods(&args.methods)?;
    let seeds = parse::seeds(&args.seeds)?;

    let mut cells: Vec<(ExperimentConfig, u64)> = Vec::new();
    for &method in &methods {
        let config = manifest.experiment(method)?;
        for &seed in &seeds {
            cells.push((config.clone(), seed));
        }
    }

    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let packet_dir = args.out.join("packets");
    fs::create_dir_all(&packet_dir)?;
    let summary_path = args.out.join("summary.json");
    ensure_fresh(&summary_path, args.force)?;
    for (config, seed) in &cells {
        ensure_fresh(&csv_path(&args.out, config.method, *seed), args.force)?;
    }

    // Cells are independent; files are written afterwards in grid order.
    let outputs: Vec<RunOutput> = cells
        .par_iter()
        .map(|(config, seed)| run_experiment(config, *seed))
        .collect::<partup::Result<_>>()?;

    for output in &outputs {
        write_round_csv(&csv_path(&args.out, output.method, output.seed), &output.logs)?;
        for (i, bytes) in output.packets.iter().enumerate() {
            let name =
                format!("{}_seed{}_round{:02}.pkt", output.method.name(), output.seed, i + 1);
            fs::write(packet_dir.join(name), bytes)?;
        }
    }

    let summary = summarize(&args.config, &seeds, &methods, &outputs);
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(&summary_path, json + "\n")?;

    println!(
        "wrote {} runs ({} methods x {} seeds) to {}",
        outputs.len(),
        methods.len(),
        seeds.len(),
        args.out.display()
    );
    Ok(())
}

fn csv_path(dir: &Path, method: Method, seed: u64) -> PathBuf {
    dir.join(format!("{}_seed{}.csv", method.name(), seed))
}

fn summarize(
    config: &Path,
    seeds: &[u64],
    methods: &[Method],
    outputs: &[RunOutput],
) -> Summary {
    let methods = methods
        .iter()
        .map(|&method| {
            let runs: Vec<&RunOutput> =
                outputs.iter().filter(|o| o.method == method).collect();
            let rounds = runs[0].logs.len();
            let column = |r: usize, get: fn(&RoundLog) -> f64| -> Vec<f64> {
                runs.iter().map(|run| get(&run.logs[r])).collect()
            };
            let per_round = (0..rounds)
                .map(|r| {
                    let (train_loss_mean, train_loss_std) = mean_std(&column(r, |l| l.train_loss));
                    let (val_acc_mean, val_acc_std) = mean_std(&column(r, |l| l.val_acc));
                    let (test_acc_mean, test_acc_std) = mean_std(&column(r, |l| l.test_acc));
                    let (bytes_mean, _) = mean_std(&column(r, |l| l.bytes_sent as f64));
                    RoundSummary {
                        round: r + 1,
                        train_loss_mean,
                        train_loss_std,
                        val_acc_mean,
                        val_acc_std,
                        test_acc_mean,
                        test_acc_std,
                        bytes_mean,
                    }
                })
                .collect();
            let totals: Vec<f64> = runs
                .iter()
                .map(|run| run.logs.iter().map(|l| l.bytes_sent as f64).sum())
                .collect();
            let finals: Vec<f64> = runs.iter().map(|run| run.logs[rounds - 1].test_acc).collect();
            let (total_bytes_mean, _) = mean_std(&totals);
            let (final_test_acc_mean, final_test_acc_std) = mean_std(&finals);
            MethodSummary {
                method: method.name(),
                per_round,
                total_bytes_mean,
                final_test_acc_mean,
                final_test_acc_std,
            }
        })
        .collect();
    Summary { config: config.display().to_string(), seeds: seeds.to_vec(), methods }
}
