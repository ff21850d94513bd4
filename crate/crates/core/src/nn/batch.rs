//! Row-major sample batches.

use crate::error::{Error, Result};

/// A set of labeled samples: `n` rows of `dim` features plus class labels.
///
/// Doubles as the container for whole datasets; training code slices or
/// gathers rows out of it. Inputs are finite, labels are validated against
/// the class count at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Vec<f64>,
    labels: Vec<u32>,
    dim: usize,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, dim: usize, labels: Vec<u32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("batch feature dimension is 0".into()));
        }
        if labels.is_empty() {
            return Err(Error::InvalidInput("batch has no rows".into()));
        }
        if inputs.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} inputs for {} rows of dim {}",
                inputs.len(),
                labels.len(),
                dim
            )));
        }
        if let Some(i) = inputs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("input {i} is {}", inputs[i])));
        }
        Ok(Self { inputs, labels, dim })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    /// New batch holding the given rows, in order.
    pub fn gather(&self, rows: &[usize]) -> Batch {
        let mut inputs = Vec::with_capacity(rows.len() * self.dim);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            inputs.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        Batch { inputs, labels, dim: self.dim }
    }

    /// New batch holding the first `n` rows.
    pub fn prefix(&self, n: usize) -> Batch {
        debug_assert!(n >= 1 && n <= self.n());
        Batch {
            inputs: self.inputs[..n * self.dim].to_vec(),
            labels: self.labels[..n].to_vec(),
            dim: self.dim,
        }
    }

    /// Largest label plus one; a lower bound on the class count.
    pub fn distinct_label_bound(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize + 1
    }
}

/// Yields the batch for each training iteration.
///
/// Implementations decide minibatch composition; training loops only pull.
pub trait BatchSource {
    fn next_batch(&mut self) -> &Batch;
}

/// Serves the same full batch every iteration (deterministic full-batch
/// training, used heavily by tests and small fixtures).
pub struct FullBatches {
    batch: Batch,
}

impl FullBatches {
    pub fn new(batch: Batch) -> Self {
        Self { batch }
    }
}

impl BatchSource for FullBatches {
    fn next_batch(&mut self) -> &Batch {
        &self.batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks() {
        assert!(Batch::new(vec![1.0, 2.0], 2, vec![0]).is_ok());
        assert!(Batch::new(vec![1.0, 2.0, 3.0], 2, vec![0]).is_err());
        assert!(Batch::new(vec![], 2, vec![]).is_err());
        assert!(Batch::new(vec![f64::INFINITY, 0.0], 2, vec![0]).is_err());
    }

    #[test]
    fn gather_and_prefix() {
        let b = Batch::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, vec![0, 1, 2]).unwrap();
        let g = b.gather(&[2, 0]);
        assert_eq!(g.row(0), &[5.0, 6.0]);
        assert_eq!(g.labels(), &[2, 0]);
        let p = b.prefix(2);
        assert_eq!(p.n(), 2);
        assert_eq!(p.row(1), &[3.0, 4.0]);
    }
}
