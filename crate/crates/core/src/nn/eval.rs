//! Forward pass, loss, gradient, and the finite-difference oracle.
//!
//! The head is softmax cross-entropy over the final layer's logits; hidden
//! layers use ReLU (subgradient 0 at exactly 0). Losses and gradients are
//! means over the batch, reduced with order-independent exact summation, so
//! permuting or duplicating batch rows leaves results bit-identical. All
//! arithmetic is f64.

use super::arch::Architecture;
use super::batch::Batch;
use super::weights::WeightVector;
use crate::error::{Error, Result};
use crate::exact::ExactSum;

/// Reusable scratch for loss and gradient evaluation.
///
/// Training loops keep one of these per run; the free functions below wrap
/// a throwaway instance for one-off calls.
pub struct Evaluator {
    arch: Architecture,
    acts: Vec<Vec<f64>>,
    dz: Vec<f64>,
    dz_prev: Vec<f64>,
    grad_acc: Vec<ExactSum>,
    loss_acc: ExactSum,
}

impl Evaluator {
    pub fn new(arch: &Architecture) -> Self {
        let acts = (0..arch.affine_layers())
            .map(|l| vec![0.0; arch.fan_out(l)])
            .collect();
        Self {
            arch: arch.clone(),
            acts,
            dz: vec![0.0; arch.max_width()],
            dz_prev: vec![0.0; arch.max_width()],
            grad_acc: (0..arch.weight_count()).map(|_| ExactSum::new()).collect(),
            loss_acc: ExactSum::new(),
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.dim() != self.arch.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "batch dim {} vs network input {}",
                batch.dim(),
                self.arch.input_dim()
            )));
        }
        let classes = self.arch.classes() as u32;
        if let Some(i) = batch.labels().iter().position(|&y| y >= classes) {
            return Err(Error::InvalidInput(format!(
                "label {} at row {i} exceeds class count {classes}",
                batch.label(i)
            )));
        }
        Ok(())
    }

    /// Runs the network on one row; logits end up in the last `acts` entry.
    fn forward_row(&mut self, values: &[f64], row: &[f64]) {
        let layers = self.arch.affine_layers();
        for l in 0..layers {
            let fan_in = self.arch.fan_in(l);
            let fan_out = self.arch.fan_out(l);
            let range = self.arch.layer_range(l);
            let weights = &values[range.start..range.start + fan_in * fan_out];
            let biases = &values[range.start + fan_in * fan_out..range.end];
            let last = l + 1 == layers;
            // Split borrow: the input to layer l is `row` or acts[l-1].
            let (prev_acts, rest) = self.acts.split_at_mut(l);
            let input: &[f64] = if l == 0 { row } else { &prev_acts[l - 1] };
            let out = &mut rest[0];
            for (j, (o, b)) in out.iter_mut().zip(biases).enumerate() {
                let wrow = &weights[j * fan_in..(j + 1) * fan_in];
                let mut z = *b;
                for (w, x) in wrow.iter().zip(input) {
                    z += w * x;
                }
                *o = if last { z } else { z.max(0.0) };
            }
        }
    }

    /// Per-sample cross-entropy and the log-sum-exp needed for softmax.
    fn row_loss(&self, label: u32) -> (f64, f64) {
        let logits = self.acts.last().unwrap();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &z in logits {
            sum += (z - max).exp();
        }
        let lse = max + sum.ln();
        (lse - logits[label as usize], lse)
    }

    /// Mean loss over the batch.
    pub fn batch_loss(&mut self, values: &[f64], batch: &Batch) -> Result<f64> {
        debug_assert_eq!(values.len(), self.arch.weight_count());
        self.check_batch(batch)?;
        self.loss_acc.reset();
        for i in 0..batch.n() {
            self.forward_row(values, batch.row(i));
            let (loss, _) = self.row_loss(batch.label(i));
            self.loss_acc.add(loss);
        }
        Ok(self.loss_acc.value() / batch.n() as f64)
    }

    /// Fraction of rows whose argmax logit matches the label. Ties go to
    /// the lowest class index.
    pub fn accuracy(&mut self, values: &[f64], batch: &Batch) -> Result<f64> {
        self.check_batch(batch)?;
        let mut correct = 0u64;
        for i in 0..batch.n() {
            self.forward_row(values, batch.row(i));
            let logits = self.acts.last().unwrap();
            let mut best = 0usize;
            for (c, &z) in logits.iter().enumerate().skip(1) {
                if z > logits[best] {
                    best = c;
                }
            }
            if best as u32 == batch.label(i) {
                correct += 1;
            }
        }
        Ok(correct as f64 / batch.n() as f64)
    }

    /// Mean loss and its gradient, written into `grad_out`.
    pub fn loss_and_gradient_into(
        &mut self,
        values: &[f64],
        batch: &Batch,
        grad_out: &mut [f64],
    ) -> Result<f64> {
        debug_assert_eq!(values.len(), self.arch.weight_count());
        debug_assert_eq!(grad_out.len(), self.arch.weight_count());
        self.check_batch(batch)?;
        self.loss_acc.reset();
        for acc in &mut self.grad_acc {
            acc.reset();
        }
        let layers = self.arch.affine_layers();
        for s in 0..batch.n() {
            let row = batch.row(s);
            self.forward_row(values, row);
            let label = batch.label(s);
            let (loss, lse) = self.row_loss(label);
            self.loss_acc.add(loss);

            // dz at the head: softmax minus one-hot.
            let logits = self.acts.last().unwrap();
            for (c, &z) in logits.iter().enumerate() {
                let onehot = if c as u32 == label { 1.0 } else { 0.0 };
                self.dz[c] = (z - lse).exp() - onehot;
            }
            for l in (0..layers).rev() {
                let fan_in = self.arch.fan_in(l);
                let fan_out = self.arch.fan_out(l);
                let range = self.arch.layer_range(l);
                let weights = &values[range.start..range.start + fan_in * fan_out];
                let bias_at = range.start + fan_in * fan_out;
                let input: &[f64] = if l == 0 { row } else { &self.acts[l - 1] };

                if l > 0 {
                    self.dz_prev[..fan_in].fill(0.0);
                }
                for j in 0..fan_out {
                    let d = self.dz[j];
                    let wrow = &weights[j * fan_in..(j + 1) * fan_in];
                    let acc_row = &mut self.grad_acc[range.start + j * fan_in..];
                    for i in 0..fan_in {
                        acc_row[i].add(d * input[i]);
                    }
                    self.grad_acc[bias_at + j].add(d);
                    if l > 0 {
                        for i in 0..fan_in {
                            self.dz_prev[i] += wrow[i] * d;
                        }
                    }
                }
                if l > 0 {
                    // ReLU subgradient: pass through only where the unit fired.
                    for i in 0..fan_in {
                        self.dz[i] = if input[i] > 0.0 { self.dz_prev[i] } else { 0.0 };
                    }
                }
            }
        }
        let n = batch.n() as f64;
        for (g, acc) in grad_out.iter_mut().zip(&self.grad_acc) {
            *g = acc.value() / n;
        }
        Ok(self.loss_acc.value() / n)
    }
}

/// Mean softmax cross-entropy of `w` on `batch`.
pub fn batch_loss(w: &WeightVector, batch: &Batch) -> Result<f64> {
    Evaluator::new(w.arch()).batch_loss(w.values(), batch)
}

/// Top-1 accuracy of `w` on `batch`.
pub fn accuracy(w: &WeightVector, batch: &Batch) -> Result<f64> {
    Evaluator::new(w.arch()).accuracy(w.values(), batch)
}

/// Mean loss and gradient of `w` on `batch`.
pub fn loss_and_gradient(w: &WeightVector, batch: &Batch) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; w.len()];
    let loss = Evaluator::new(w.arch()).loss_and_gradient_into(w.values(), batch, &mut grad)?;
    Ok((loss, grad))
}

/// Central-difference gradient of an arbitrary scalar function.
///
/// Perturbs one coordinate at a time: (f(x + e_i eps) - f(x - e_i eps)) /
/// (2 eps). Exact for quadratics up to rounding; the independent check that
/// backprop is differentiating the same function it evaluates.
pub fn central_difference(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidInput(format!("step must be positive, got {eps}")));
    }
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = f(&probe);
        probe[i] = x[i] - eps;
        let down = f(&probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * eps);
    }
    Ok(grad)
}

/// Finite-difference gradient of the batch loss, for cross-checking
/// backprop.
pub fn finite_diff_gradient(w: &WeightVector, batch: &Batch, eps: f64) -> Result<Vec<f64>> {
    let mut eval = Evaluator::new(w.arch());
    let batch_ref = &batch;
    // Loss evaluation cannot fail once the batch has been validated, so the
    // closure can unwrap; validate up front.
    eval.batch_loss(w.values(), batch)?;
    central_difference(
        move |vals| eval.batch_loss(vals, batch_ref).expect("validated batch"),
        w.values(),
        eps,
    )
}
