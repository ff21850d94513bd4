//! `dump-packet`: human-readable view of one encoded frame.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use partup::inspect_packet;

#[derive(Args)]
pub struct DumpArgs {
    /// Packet file to inspect.
    pub file: PathBuf,
}

pub fn cmd_dump(args: &DumpArgs) -> Result<()> {
    let bytes =
        fs::read(&args.file).with_context(|| format!("cannot read {}", args.file.display()))?;
    let info = inspect_packet(&bytes)
        .with_context(|| format!("{} is not a valid packet", args.file.display()))?;

    println!("version      {}", info.version);
    println!("frame        {}", info.frame_type);
    println!("round        {}", info.round);
    println!("weights      {}", info.i_count);
    match info.s_w {
        Some(bits) => println!("value_width  {bits}"),
        None => println!("value_width  -"),
    }
    match info.k_count {
        Some(k) => println!("k_count      {k}"),
        None => println!("k_count      -"),
    }
    match info.seed {
        Some(seed) => println!("reinit_seed  {seed:#018x}"),
        None => println!("reinit_seed  -"),
    }
    match info.mask_encoding {
        Some(enc) => println!("mask         {} ({} bytes)", enc.as_str(), info.mask_bytes),
        None => println!("mask         -"),
    }
    println!("values       {} bytes", info.value_bytes);
    println!("total        {} bytes", info.total_bytes);
    println!("crc32        {:#010x}", info.checksum);
    Ok(())
}
