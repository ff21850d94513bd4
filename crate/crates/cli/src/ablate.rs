//! `ablate-rewind`: one-round comparison of rewound loss under the
//! combined, global-only, local-only, and random selection metrics.

use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use rayon::prelude::*;

use partup::{ensure_fresh, mean_std, rewind_ablation, AblationRow, Method};

use crate::config::Manifest;
use crate::parse;

#[derive(Args)]
pub struct AblateArgs {
    /// Experiment manifest (TOML); k and the fixture come from it.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Comma-separated seeds; a..b ranges are inclusive.
    #[arg(long, default_value = "1..5")]
    pub seeds: String,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let manifest = Manifest::load(&args.config)?;
    let config = manifest.experiment(Method::Dpu)?;
    let seeds = parse::seeds(&args.seeds)?;

    fs::create_dir_all(&args.out)?;
    let table_path = args.out.join("ablation.csv");
    let rows_path = args.out.join("ablation_seeds.csv");
    ensure_fresh(&table_path, args.force)?;
    ensure_fresh(&rows_path, args.force)?;

    let rows: Vec<AblationRow> = seeds
        .par_iter()
        .map(|&seed| rewind_ablation(&config, seed))
        .collect::<partup::Result<_>>()?;

    let mut per_seed = String::from("seed,deployed,full,combined,global,local,random\n");
    for r in &rows {
        per_seed.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.seed,
            r.loss_deployed,
            r.loss_full,
            r.loss_combined,
            r.loss_global,
            r.loss_local,
            r.loss_random
        ));
    }
    fs::write(&rows_path, per_seed)?;

    let metrics: [(&str, fn(&AblationRow) -> f64); 6] = [
        ("deployed", |r| r.loss_deployed),
        ("full", |r| r.loss_full),
        ("combined", |r| r.loss_combined),
        ("global", |r| r.loss_global),
        ("local", |r| r.loss_local),
        ("random", |r| r.loss_random),
    ];
    let mut table = String::from("metric,mean,std\n");
    println!("{:<10} {:>12} {:>12}", "metric", "mean", "std");
    for (name, get) in metrics {
        let values: Vec<f64> = rows.iter().map(get).collect();
        let (mean, std) = mean_std(&values);
        table.push_str(&format!("{name},{mean},{std}\n"));
        println!("{name:<10} {mean:>12.6} {std:>12.6}");
    }
    fs::write(&table_path, table)?;
    println!("wrote {} and {}", table_path.display(), rows_path.display());
    Ok(())
}
