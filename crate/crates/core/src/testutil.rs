//! Shared fixtures for unit tests.

use crate::nn::{Architecture, Batch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A batch of uniform-random inputs with random labels, sized for `arch`.
pub(crate) fn random_batch(arch: &Architecture, n: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = arch.input_dim();
    let inputs: Vec<f64> = (0..n * dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..arch.classes() as u32)).collect();
    Batch::new(inputs, dim, labels).unwrap()
}

/// The small separable fixture used across training tests: one Gaussian
/// blob per class, sized to the network's input and class counts.
pub(crate) fn blob_batch(arch: &Architecture, n_per_class: usize, sigma: f64, seed: u64) -> Batch {
    let params = crate::data::SyntheticParams {
        classes: arch.classes(),
        dims: arch.input_dim(),
        sigma,
        count: n_per_class * arch.classes(),
    };
    crate::data::generate_synthetic(&params, seed).unwrap()
}
