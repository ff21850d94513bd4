//! `cost`: analytic size tables for partial versus full updates.

use std::fs;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use partup::{
    breakeven_ratio, ensure_fresh, full_update_bits, index_entropy, node_ratio_curve,
    server_to_edge_bits, CostParams,
};

use crate::parse;

#[derive(Args)]
pub struct CostArgs {
    /// Bits per transmitted weight value.
    #[arg(long = "s-w", default_value_t = 32)]
    pub s_w: u32,
    /// Bits per uploaded training sample.
    #[arg(long = "s-d", default_value_t = 544)]
    pub s_d: u64,
    /// Model weight count I.
    #[arg(long = "i-count")]
    pub i_count: usize,
    /// Fresh samples uploaded per round, for the per-node curves.
    #[arg(long, default_value_t = 200)]
    pub new_samples: usize,
    /// Updating ratios to tabulate, comma-separated.
    #[arg(long)]
    pub k: String,
    /// Fleet sizes for the per-node ratio curves.
    #[arg(long, default_value = "1,2,5,10,20,50,100,200,500,1000")]
    pub nodes: String,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

pub fn cmd_cost(args: &CostArgs) -> Result<()> {
    let ks = parse::ratios(&args.k)?;
    let ns = parse::nodes(&args.nodes)?;
    let params = CostParams::new(args.s_w, args.s_d, args.i_count, ns[0])?;

    fs::create_dir_all(&args.out)?;
    let table_path = args.out.join("cost_table.csv");
    let curve_path = args.out.join("node_curve.csv");
    ensure_fresh(&table_path, args.force)?;
    ensure_fresh(&curve_path, args.force)?;

    let full = full_update_bits(&params);
    let mut table = String::from("k,index_entropy,partial_bits,full_bits,ratio\n");
    println!("{:>8} {:>16} {:>16} {:>12}", "k", "S_x(k)", "partial_bits", "ratio");
    for &k in &ks {
        let partial = server_to_edge_bits(k, &params)?;
        let entropy = index_entropy(k)?;
        table.push_str(&format!("{k},{entropy},{partial},{full},{}\n", partial / full));
        println!("{k:>8} {entropy:>16.12} {partial:>16.1} {:>12.6}", partial / full);
    }
    fs::write(&table_path, table)?;

    let mut curve = String::from("k,n_nodes,ratio\n");
    for &k in &ks {
        for (n, ratio) in node_ratio_curve(k, args.new_samples, &params, &ns)? {
            curve.push_str(&format!("{k},{n},{ratio}\n"));
        }
    }
    fs::write(&curve_path, curve)?;

    println!(
        "S_w = {} bits, I = {}, breakeven k = {}",
        args.s_w,
        args.i_count,
        breakeven_ratio(args.s_w)
    );
    println!("wrote {} and {}", table_path.display(), curve_path.display());
    Ok(())
}
