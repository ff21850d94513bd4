//! Analytical communication accounting.
//!
//! Sizes are modeled in bits with fractional entropy terms; bytes only
//! exist at the codec boundary. A partial update ships k*I weight values
//! plus an index encoding whose ideal size is the binary entropy of the
//! selection ratio, per weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::exact_sum;

/// Cost-model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Bits per transmitted weight value.
    pub s_w: u32,
    /// Bits per training sample uploaded by the fleet.
    pub s_d: u64,
    /// Weight count I.
    pub i_count: usize,
    /// Fleet size N.
    pub n_nodes: usize,
}

impl CostParams {
    pub fn new(s_w: u32, s_d: u64, i_count: usize, n_nodes: usize) -> Result<Self> {
        if s_w == 0 || s_d == 0 || i_count == 0 || n_nodes == 0 {
            return Err(Error::InvalidInput("cost parameters must be positive".into()));
        }
        Ok(Self { s_w, s_d, i_count, n_nodes })
    }
}

fn check_ratio(k: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::InvalidInput(format!("ratio {k} outside [0, 1]")));
    }
    Ok(())
}

/// Binary entropy in bits: k log2(1/k) + (1-k) log2(1/(1-k)), with the
/// limit value 0 at both endpoints.
pub fn index_entropy(k: f64) -> Result<f64> {
    check_ratio(k)?;
    if k == 0.0 || k == 1.0 {
        return Ok(0.0);
    }
    Ok(-k * k.log2() - (1.0 - k) * (1.0 - k).log2())
}

/// Ideal downlink size of one partial update: S_w k I value bits plus
/// S_x(k) I index bits.
pub fn server_to_edge_bits(k: f64, params: &CostParams) -> Result<f64> {
    check_ratio(k)?;
    let i = params.i_count as f64;
    Ok(params.s_w as f64 * k * i + index_entropy(k)? * i)
}

/// Downlink size of a full update: S_w I bits, no index section.
pub fn full_update_bits(params: &CostParams) -> f64 {
    params.s_w as f64 * params.i_count as f64
}

/// Largest k at which a partial update still beats a full one even with
/// the index entropy at its worst case of one bit per weight.
pub fn breakeven_ratio(s_w: u32) -> f64 {
    (s_w as f64 - 1.0) / s_w as f64
}

/// Per-node round total: the node's share of the sample upload plus the
/// downlink bits actually sent that round.
pub fn per_node_total_bits(new_samples: usize, downlink_bits: f64, params: &CostParams) -> f64 {
    params.s_d as f64 * new_samples as f64 / params.n_nodes as f64 + downlink_bits
}

/// Ratio of summed per-round sizes against the full-updating baseline.
pub fn cumulative_ratio(method_bits: &[f64], fu_bits: &[f64]) -> Result<f64> {
    if method_bits.len() != fu_bits.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rounds vs {} rounds",
            method_bits.len(),
            fu_bits.len()
        )));
    }
    let denom = exact_sum(fu_bits.iter().copied());
    if denom <= 0.0 {
        return Err(Error::InvalidInput("baseline cost is not positive".into()));
    }
    Ok(exact_sum(method_bits.iter().copied()) / denom)
}

/// Downlink-only analytic ratio of a k-partial update to a full one.
pub fn analytic_update_ratio(k: f64, params: &CostParams) -> Result<f64> {
    Ok(server_to_edge_bits(k, params)? / full_update_bits(params))
}

/// Per-node total ratio (partial over full) for each fleet size in `n`,
/// assuming every round uploads `new_samples` fresh samples.
pub fn node_ratio_curve(
    k: f64,
    new_samples: usize,
    params: &CostParams,
    n: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let partial = server_to_edge_bits(k, params)?;
    let full = full_update_bits(params);
    n.iter()
        .map(|&nodes| {
            let p = CostParams { n_nodes: nodes, ..*params };
            if nodes == 0 {
                return Err(Error::InvalidInput("zero nodes".into()));
            }
            let num = per_node_total_bits(new_samples, partial, &p);
            let den = per_node_total_bits(new_samples, full, &p);
            Ok((nodes, num / den))
        })
        .collect()
}
