//! Per-weight importance scores.
//!
//! Two complementary signals rank weights for partial updating: the global
//! contribution, the squared displacement each weight underwent during a
//! full update, and the local contribution, the loss-reduction credit
//! accumulated along the optimization path. Their normalized sum is the
//! selection score.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::exact::exact_sum;
use crate::nn::WeightVector;

/// Entry sums at or below this are treated as degenerate.
const DEGENERATE_EPS: f64 = 1e-12;

/// Which importance signal a vector carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContributionKind {
    Global,
    Local,
    Combined,
}

/// A length-I vector of per-weight importance values.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionVector {
    values: Vec<f64>,
    kind: ContributionKind,
}

impl ContributionVector {
    pub fn new(values: Vec<f64>, kind: ContributionKind) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty contribution vector".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("contribution entry {i}")));
        }
        if kind == ContributionKind::Global {
            if let Some(i) = values.iter().position(|&v| v < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "global contribution entry {i} is negative"
                )));
            }
        }
        Ok(Self { values, kind })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> ContributionKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Running local-contribution accumulator over a training trajectory.
#[derive(Debug, Clone)]
pub struct TraceState {
    accumulator: Vec<f64>,
    steps_seen: usize,
}

impl TraceState {
    /// Zeroed accumulator for `weight_count` parameters.
    pub fn new(weight_count: usize) -> Self {
        Self { accumulator: vec![0.0; weight_count], steps_seen: 0 }
    }

    /// Credits one iteration: accumulator -= g (.) delta, where `grad` is
    /// the gradient at the pre-step weights and `delta` the applied step.
    pub fn accumulate(&mut self, grad: &[f64], delta: &[f64]) -> Result<()> {
        if grad.len() != self.accumulator.len() || delta.len() != self.accumulator.len() {
            return Err(Error::DimensionMismatch(format!(
                "trace len {}, gradient len {}, step len {}",
                self.accumulator.len(),
                grad.len(),
                delta.len()
            )));
        }
        for ((acc, g), d) in self.accumulator.iter_mut().zip(grad).zip(delta) {
            *acc -= g * d;
        }
        self.steps_seen += 1;
        Ok(())
    }

    pub fn steps_seen(&self) -> usize {
        self.steps_seen
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.accumulator
    }

    /// Finalizes the trace as a local contribution vector.
    pub fn into_local(self) -> Result<ContributionVector> {
        ContributionVector::new(self.accumulator, ContributionKind::Local)
    }
}

/// Squared per-weight displacement between the deployed and fully-updated
/// weights.
pub fn global_contribution(w: &WeightVector, w_f: &WeightVector) -> Result<ContributionVector> {
    if w.arch() != w_f.arch() {
        return Err(Error::DimensionMismatch(
            "architectures differ between weight vectors".into(),
        ));
    }
    let values = w
        .values()
        .iter()
        .zip(w_f.values())
        .map(|(a, b)| {
            let d = b - a;
            d * d
        })
        .collect();
    ContributionVector::new(values, ContributionKind::Global)
}

/// Normalizes by the entry sum, falling back to the L1 norm when the sum
/// is degenerate (possible for local contributions, whose entries can be
/// negative under momentum or adaptive steps). Returns `None` when the
/// vector is effectively zero.
fn normalized(values: &[f64]) -> Option<Vec<f64>> {
    let sum = exact_sum(values.iter().copied());
    if sum > DEGENERATE_EPS {
        return Some(values.iter().map(|v| v / sum).collect());
    }
    let l1 = exact_sum(values.iter().map(|v| v.abs()));
    if l1 > DEGENERATE_EPS {
        return Some(values.iter().map(|v| v / l1).collect());
    }
    None
}

/// Sum of the entry-sum-normalized global and local vectors.
///
/// If one vector is effectively zero the other is used alone; if both are,
/// the degeneracy is surfaced as an error rather than silently producing a
/// meaningless ranking.
pub fn combine(c_g: &ContributionVector, c_l: &ContributionVector) -> Result<ContributionVector> {
    if c_g.len() != c_l.len() {
        return Err(Error::DimensionMismatch(format!(
            "contribution lengths {} vs {}",
            c_g.len(),
            c_l.len()
        )));
    }
    let ng = normalized(c_g.values());
    let nl = normalized(c_l.values());
    let combined = match (ng, nl) {
        (Some(g), Some(l)) => g.iter().zip(&l).map(|(a, b)| a + b).collect(),
        (Some(g), None) => g,
        (None, Some(l)) => l,
        (None, None) => return Err(Error::DegenerateContributions),
    };
    ContributionVector::new(combined, ContributionKind::Combined)
}

/// Writes a tab-separated table (index, global, local, combined) for
/// offline inspection.
pub fn dump_table(
    path: &Path,
    c_g: &ContributionVector,
    c_l: &ContributionVector,
    c: &ContributionVector,
) -> Result<()> {
    if c_g.len() != c_l.len() || c_g.len() != c.len() {
        return Err(Error::DimensionMismatch("contribution lengths differ".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "index\tc_global\tc_local\tc_combined")?;
        for i in 0..c_g.len() {
            writeln!(
                out,
                "{i}\t{:.17e}\t{:.17e}\t{:.17e}",
                c_g.values()[i],
                c_l.values()[i],
                c.values()[i]
            )?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}
