//! List grammars for --seeds, --methods, --k, and --nodes.

use anyhow::{bail, Context, Result};
use partup::Method;

fn u64_list(text: &str, what: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: u64 =
                lo.trim().parse().with_context(|| format!("bad {what} range start in {part:?}"))?;
            let hi: u64 =
                hi.trim().parse().with_context(|| format!("bad {what} range end in {part:?}"))?;
            if lo > hi {
                bail!("{what} range {part:?} is reversed");
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().with_context(|| format!("bad {what} {part:?}"))?);
        }
    }
    if out.is_empty() {
        bail!("{what} list {text:?} is empty");
    }
    Ok(out)
}

/// Comma-separated values and inclusive a..b ranges, e.g. "1..3,7".
pub fn seeds(text: &str) -> Result<Vec<u64>> {
    let out = u64_list(text, "seed")?;
    for (i, s) in out.iter().enumerate() {
        if out[..i].contains(s) {
            bail!("seed {s} repeats; every (method, seed) cell must be unique");
        }
    }
    Ok(out)
}

pub fn nodes(text: &str) -> Result<Vec<usize>> {
    u64_list(text, "node count")?.into_iter().map(|n| Ok(n as usize)).collect()
}

pub fn methods(text: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let method = Method::parse(part.trim())?;
        if out.contains(&method) {
            bail!("method {} repeats", method.name());
        }
        out.push(method);
    }
    Ok(out)
}

pub fn ratios(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(part.parse::<f64>().with_context(|| format!("bad ratio {part:?}"))?);
    }
    if out.is_empty() {
        bail!("ratio list {text:?} is empty");
    }
    Ok(out)
}
