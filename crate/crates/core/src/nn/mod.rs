//! Deterministic neural-network substrate.
//!
//! Small multilayer perceptrons with ReLU hidden layers and a softmax
//! cross-entropy head, stored as flat f64 weight vectors. Everything here
//! is bitwise reproducible: initialization is a pure function of
//! (architecture, seed), and batch reductions are order-independent exact
//! sums. Minibatch composition is the caller's concern; this module only
//! consumes batches.

mod arch;
mod batch;
mod eval;
mod weights;

pub use arch::Architecture;
pub use batch::{Batch, BatchSource, FullBatches};
pub use eval::{
    accuracy, batch_loss, central_difference, finite_diff_gradient, loss_and_gradient, Evaluator,
};
pub use weights::{init_weights, WeightVector};
