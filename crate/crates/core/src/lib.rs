//! Weight-wise partial updating for small dense classifiers.
//!
//! The crate simulates a server that retrains a deployed model as data
//! accumulates in rounds, but transmits only the most loss-relevant
//! fraction of the weights to edge nodes. It provides:
//!
//! * a deterministic MLP forward/backward pass with exactly reduced sums,
//! * global and local weight-contribution measures and top-k masking,
//! * the two-step round: full update, rewind, masked fine-tune,
//! * baselines (global-only, random-mask, full updating),
//! * a compact wire codec with an entropy-coded index mask, and
//! * communication-cost accounting for server-edge fleets.
//!
//! Everything is seeded: the same configuration and seed reproduce every
//! weight, packet byte, and logged metric bit for bit.

pub mod codec;
pub mod commcost;
pub mod contribution;
pub mod data;
pub mod error;
pub mod exact;
pub mod nn;
pub mod optim;
pub mod rounds;
pub mod seeds;
pub mod update;

#[cfg(test)]
mod testutil;

pub use codec::{
    apply_packet, decode_packet, encode_packet, inspect_packet, CodecError, Frame, MaskEncoding,
    PacketInfo, UpdatePacket, ValueWidth,
};
pub use commcost::{
    analytic_update_ratio, breakeven_ratio, cumulative_ratio, full_update_bits, index_entropy,
    node_ratio_curve, per_node_total_bits, server_to_edge_bits, CostParams,
};
pub use contribution::{combine, global_contribution, ContributionVector, TraceState};
pub use error::{Error, Result};
pub use nn::{
    accuracy, batch_loss, init_weights, Architecture, Batch, BatchSource, Evaluator, WeightVector,
};
pub use optim::{LrSchedule, OptimizerKind};
pub use rounds::{
    accept_update, ensure_fresh, mean_std, reinit_due, rewind_ablation, run_experiment,
    write_round_csv, AblationRow, DataSource, DataStream, Experiment, ExperimentConfig, LrConfig,
    Method, PreparedData, RoundLog, RunOutput,
};
pub use update::{
    dpu_round, gcpu_round, random_mask, rewind, rpu_mask, select_mask, sparse_finetune,
    target_k_count, Mask, PartialUpdateResult, SparseDelta, TrainPlan,
};
