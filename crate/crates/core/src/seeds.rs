//! Seed derivation for named random substreams.
//!
//! Every random choice in an experiment flows from one master seed. Distinct
//! concerns (weight init, data generation, per-round random masks, minibatch
//! shuffling) each get their own substream so that changing how one concern
//! consumes randomness never perturbs the others.

/// SplitMix64 finalizer; a well-mixed bijection on u64.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in name.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derives the seed for substream `name` with an optional index (round
/// number, step number) from `master`. Deterministic, and distinct names or
/// indices give independent-looking streams.
pub fn substream(master: u64, name: &str, index: u64) -> u64 {
    splitmix64(master ^ fnv1a(name) ^ splitmix64(index))
}

/// Substream names used by the experiment driver. Centralized so tests can
/// reproduce the exact streams the driver consumes.
pub mod stream {
    /// Weight initialization; also the seed FU retrains from and re-init
    /// restarts ship to the edge.
    pub const INIT: &str = "init";
    /// Sample pool generation and the train/holdout shuffle.
    pub const DATA: &str = "data";
    /// Per-round random masks for the random-partial baseline.
    pub const RPU_MASK: &str = "rpu-mask";
    /// Minibatch shuffling; indexed by round and step.
    pub const SHUFFLE: &str = "shuffle";
    /// Random masks drawn by the rewind ablation.
    pub const ABLATE_RANDOM: &str = "ablate-random";
}
