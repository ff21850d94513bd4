//! Flat weight vectors and deterministic initialization.

use super::arch::Architecture;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// All parameters of a network as one flat vector, paired with its shape.
///
/// Layout matches [`Architecture::layer_range`]: layer by layer, weight
/// matrix row-major (output-major) then biases. Entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    arch: Architecture,
    values: Vec<f64>,
}

impl WeightVector {
    /// Wraps raw values, validating length and finiteness.
    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.weight_count() {
            return Err(Error::DimensionMismatch(format!(
                "weight vector has {} entries, architecture needs {}",
                values.len(),
                arch.weight_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("weight {i} is {}", values[i])));
        }
        Ok(Self { arch, values })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Deterministically initializes weights for `arch` from `seed`.
///
/// Weights are drawn uniformly from [-b, b] with b = sqrt(6 / (fan_in +
/// fan_out)) per layer; biases start at zero. The same (arch, seed) pair
/// always yields bit-identical values, which is what lets a full retrain be
/// shipped to the edge as nothing but a seed.
pub fn init_weights(arch: &Architecture, seed: u64) -> WeightVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; arch.weight_count()];
    for layer in 0..arch.affine_layers() {
        let fan_in = arch.fan_in(layer);
        let fan_out = arch.fan_out(layer);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let range = arch.layer_range(layer);
        let weight_end = range.start + fan_in * fan_out;
        for v in &mut values[range.start..weight_end] {
            *v = bound * (2.0 * rng.gen::<f64>() - 1.0);
        }
        // Biases stay zero.
    }
    WeightVector { arch: arch.clone(), values }
}
