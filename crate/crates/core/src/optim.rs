//! First-order optimizers producing additive steps.
//!
//! Every optimizer maps a gradient to a step delta; training applies
//! `w <- w + delta`. Keeping steps explicit is what lets partial updating
//! project them through a mask without touching frozen coordinates, and
//! what the local contribution metric accumulates against.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Optimizer family plus its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Plain steepest descent: delta = -a g.
    Sgd,
    /// Nesterov momentum: v <- u v + g, delta = -a (g + u v).
    NesterovSgd { momentum: f64 },
    /// Adam with bias correction; step index t is the iteration number.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    /// Adam with the customary defaults (0.9, 0.999, 1e-8).
    pub fn adam_default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            OptimizerKind::Sgd => Ok(()),
            OptimizerKind::NesterovSgd { momentum } => {
                if (0.0..1.0).contains(&momentum) {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!("momentum {momentum} outside [0, 1)")))
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                    Err(Error::InvalidInput(format!("adam betas ({beta1}, {beta2}) outside [0, 1)")))
                } else if !(epsilon > 0.0) {
                    Err(Error::InvalidInput(format!("adam epsilon {epsilon} not positive")))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Per-iteration learning rates, materialized as an explicit table.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    rates: Vec<f64>,
}

impl LrSchedule {
    /// A flat schedule of `total` iterations at `rate`.
    pub fn constant(rate: f64, total: usize) -> Result<Self> {
        Self::stepped(rate, 1.0, usize::MAX, total)
    }

    /// Step decay: the rate starts at `initial` and is multiplied by
    /// `factor` after every `interval` iterations.
    pub fn stepped(initial: f64, factor: f64, interval: usize, total: usize) -> Result<Self> {
        if !(initial > 0.0) || !initial.is_finite() {
            return Err(Error::InvalidInput(format!("initial rate {initial} not positive")));
        }
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::InvalidInput(format!("decay factor {factor} not positive")));
        }
        if interval == 0 {
            return Err(Error::InvalidInput("decay interval is 0".into()));
        }
        if total == 0 {
            return Err(Error::InvalidInput("schedule length is 0".into()));
        }
        let mut rates = Vec::with_capacity(total);
        let mut rate = initial;
        for q in 0..total {
            if q > 0 && interval != usize::MAX && q % interval == 0 {
                rate *= factor;
            }
            rates.push(rate);
        }
        Ok(Self { rates })
    }

    /// Rate for 1-based iteration `q`; sticks at the final rate past the
    /// end of the table.
    pub fn rate(&self, q: usize) -> f64 {
        debug_assert!(q >= 1);
        let idx = (q - 1).min(self.rates.len() - 1);
        self.rates[idx]
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

/// Mutable optimizer state: moment vectors plus the schedule.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    schedule: LrSchedule,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    /// Fresh state (zero moments) for `weight_count` parameters.
    pub fn new(kind: OptimizerKind, schedule: LrSchedule, weight_count: usize) -> Result<Self> {
        kind.validate()?;
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::NesterovSgd { .. } => (vec![0.0; weight_count], Vec::new()),
            OptimizerKind::Adam { .. } => (vec![0.0; weight_count], vec![0.0; weight_count]),
        };
        Ok(Self { kind, schedule, m, v })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Computes the step for iteration `q` (1-based) into `delta`.
    ///
    /// Callers must pass q = 1, 2, 3, ... in order; Adam's bias correction
    /// uses it as the step count.
    pub fn step_into(&mut self, grad: &[f64], q: usize, delta: &mut [f64]) -> Result<()> {
        if q == 0 {
            return Err(Error::InvalidInput("iteration index is 1-based".into()));
        }
        if grad.len() != delta.len() {
            return Err(Error::DimensionMismatch(format!(
                "gradient len {} vs delta len {}",
                grad.len(),
                delta.len()
            )));
        }
        let alpha = self.schedule.rate(q);
        match self.kind {
            OptimizerKind::Sgd => {
                for (d, g) in delta.iter_mut().zip(grad) {
                    *d = -alpha * g;
                }
            }
            OptimizerKind::NesterovSgd { momentum } => {
                if self.m.len() != grad.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "state sized for {} weights, gradient has {}",
                        self.m.len(),
                        grad.len()
                    )));
                }
                for ((d, g), v) in delta.iter_mut().zip(grad).zip(&mut self.m) {
                    *v = momentum * *v + g;
                    *d = -alpha * (g + momentum * *v);
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                if self.m.len() != grad.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "state sized for {} weights, gradient has {}",
                        self.m.len(),
                        grad.len()
                    )));
                }
                let bc1 = 1.0 - beta1.powi(q as i32);
                let bc2 = 1.0 - beta2.powi(q as i32);
                for i in 0..grad.len() {
                    let g = grad[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let mhat = self.m[i] / bc1;
                    let vhat = self.v[i] / bc2;
                    delta[i] = -alpha * mhat / (vhat.sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }

    /// Allocating convenience wrapper around [`OptimizerState::step_into`].
    pub fn step(&mut self, grad: &[f64], q: usize) -> Result<Vec<f64>> {
        let mut delta = vec![0.0; grad.len()];
        self.step_into(grad, q, &mut delta)?;
        Ok(delta)
    }
}
