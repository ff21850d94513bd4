//! Two-step partial updating.
//!
//! A round first trains a full update to get `w_f`, scores every weight,
//! and keeps only the top-k. The kept coordinates resume from their fully
//! updated values while the rest rewind to the deployed weights; a second
//! training pass then fine-tunes through the mask so frozen coordinates
//! never move. The result carries the sparse delta actually transmitted.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::contribution::{combine, global_contribution, ContributionVector, TraceState};
use crate::error::{Error, Result};
use crate::nn::{Architecture, Batch, BatchSource, Evaluator, WeightVector};
use crate::optim::{LrSchedule, OptimizerKind, OptimizerState};

/// Immutable binary selection mask over the weight vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    bits: Vec<bool>,
    cardinality: usize,
}

impl Mask {
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidInput("empty mask".into()));
        }
        let cardinality = bits.iter().filter(|&&b| b).count();
        Ok(Self { bits, cardinality })
    }

    /// Mask of length `len` with ones exactly at `ones` (any order, no
    /// duplicates).
    pub fn from_indices(len: usize, ones: &[usize]) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidInput("empty mask".into()));
        }
        let mut bits = vec![false; len];
        for &i in ones {
            if i >= len {
                return Err(Error::InvalidInput(format!("mask index {i} out of range {len}")));
            }
            if bits[i] {
                return Err(Error::InvalidInput(format!("duplicate mask index {i}")));
            }
            bits[i] = true;
        }
        Ok(Self { bits, cardinality: ones.len() })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn is_set(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Indices of the ones, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }
}

/// Sparse weight delta: strictly increasing indices with one value per
/// selected coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDelta {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseDelta {
    pub fn new(dim: usize, indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} indices vs {} values",
                indices.len(),
                values.len()
            )));
        }
        for pair in indices.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::InvalidInput("delta indices not strictly increasing".into()));
            }
        }
        if let Some(&last) = indices.last() {
            if last as usize >= dim {
                return Err(Error::InvalidInput(format!("delta index {last} out of range {dim}")));
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("delta value {i}")));
        }
        Ok(Self { dim, indices, values })
    }

    /// Full weight-vector length I.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    /// Dense length-`dim` vector with the delta scattered in.
    pub fn densify(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// `base + densify()`, the receiver-side application.
    pub fn apply(&self, base: &[f64]) -> Result<Vec<f64>> {
        if base.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "base len {} vs delta dim {}",
                base.len(),
                self.dim
            )));
        }
        let mut out = base.to_vec();
        for (i, v) in self.iter() {
            out[i] = base[i] + v;
        }
        Ok(out)
    }
}

/// Outcome of one partial-update round.
#[derive(Debug, Clone)]
pub struct PartialUpdateResult {
    pub w_new: WeightVector,
    pub mask: Mask,
    pub delta: SparseDelta,
    pub train_loss_full: f64,
    pub train_loss_rewound: f64,
    pub train_loss_final: f64,
}

/// Optimizer, per-iteration learning rates, and iteration count for one
/// training pass.
#[derive(Debug, Clone)]
pub struct TrainPlan {
    optimizer: OptimizerKind,
    schedule: LrSchedule,
    iterations: usize,
}

impl TrainPlan {
    pub fn new(optimizer: OptimizerKind, schedule: LrSchedule, iterations: usize) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::InvalidInput("zero training iterations".into()));
        }
        Ok(Self { optimizer, schedule, iterations })
    }

    pub fn optimizer(&self) -> OptimizerKind {
        self.optimizer
    }

    pub fn schedule(&self) -> &LrSchedule {
        &self.schedule
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    fn fresh_state(&self, weight_count: usize) -> Result<OptimizerState> {
        OptimizerState::new(self.optimizer, self.schedule.clone(), weight_count)
    }
}

/// Number of weights a ratio selects: round(k * I), at least 1, at most I.
/// Halves round up.
pub fn target_k_count(weight_count: usize, k: f64) -> Result<usize> {
    if weight_count == 0 {
        return Err(Error::InvalidInput("zero weight count".into()));
    }
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::InvalidInput(format!("update ratio {k} outside (0, 1]")));
    }
    let raw = (k * weight_count as f64).round() as usize;
    Ok(raw.clamp(1, weight_count))
}

fn fold_zero(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Ones at the `target_k_count` largest entries; ties go to the lower
/// index.
pub fn select_mask(c: &ContributionVector, k: f64) -> Result<Mask> {
    let count = target_k_count(c.len(), k)?;
    let values = c.values();
    let mut order: Vec<u32> = (0..values.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        let va = fold_zero(values[a as usize]);
        let vb = fold_zero(values[b as usize]);
        vb.total_cmp(&va).then_with(|| a.cmp(&b))
    });
    let ones: Vec<usize> = order[..count].iter().map(|&i| i as usize).collect();
    Mask::from_indices(values.len(), &ones)
}

/// Keeps `w_f` where the mask is set and rewinds to `w` elsewhere, copying
/// bits untouched.
pub fn rewind(w: &WeightVector, w_f: &WeightVector, mask: &Mask) -> Result<WeightVector> {
    if w.arch() != w_f.arch() {
        return Err(Error::DimensionMismatch("architectures differ".into()));
    }
    if mask.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "mask len {} vs weight count {}",
            mask.len(),
            w.len()
        )));
    }
    let values = w
        .values()
        .iter()
        .zip(w_f.values())
        .zip(mask.bits())
        .map(|((&a, &b), &keep)| if keep { b } else { a })
        .collect();
    WeightVector::from_values(w.arch().clone(), values)
}

/// Per-layer uniform random mask: each affine layer keeps exactly
/// round(k * I_layer) of its weights (biases included). The global
/// cardinality can differ from round(k * I) by per-layer rounding.
pub fn rpu_mask(arch: &Architecture, k: f64, seed: u64) -> Result<Mask> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::InvalidInput(format!("update ratio {k} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ones = Vec::new();
    for layer in 0..arch.affine_layers() {
        let range = arch.layer_range(layer);
        let layer_count = range.len();
        let keep = ((k * layer_count as f64).round() as usize).min(layer_count);
        let mut slots: Vec<usize> = range.collect();
        slots.shuffle(&mut rng);
        slots.truncate(keep);
        ones.extend(slots);
    }
    Mask::from_indices(arch.weight_count(), &ones)
}

/// Uniform random mask with exactly `target_k_count` ones over the whole
/// vector (the selection-free baseline for ablations).
pub fn random_mask(weight_count: usize, k: f64, seed: u64) -> Result<Mask> {
    let count = target_k_count(weight_count, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots: Vec<usize> = (0..weight_count).collect();
    slots.shuffle(&mut rng);
    slots.truncate(count);
    Mask::from_indices(weight_count, &slots)
}

/// Trains `plan.iterations` steps from `w`, optionally accumulating the
/// per-iteration trace, and returns the fully updated weights.
pub fn full_update_step(
    w: &WeightVector,
    batches: &mut dyn BatchSource,
    plan: &TrainPlan,
    mut trace: Option<&mut TraceState>,
) -> Result<WeightVector> {
    let arch = w.arch().clone();
    let icount = arch.weight_count();
    let mut values = w.values().to_vec();
    let mut opt = plan.fresh_state(icount)?;
    let mut eval = Evaluator::new(&arch);
    let mut grad = vec![0.0; icount];
    let mut delta = vec![0.0; icount];
    for q in 1..=plan.iterations {
        let batch = batches.next_batch();
        eval.loss_and_gradient_into(&values, batch, &mut grad)?;
        opt.step_into(&grad, q, &mut delta)?;
        if let Some(t) = trace.as_deref_mut() {
            t.accumulate(&grad, &delta)?;
        }
        for (v, d) in values.iter_mut().zip(&delta) {
            *v += d;
        }
    }
    WeightVector::from_values(arch, values)
}

/// Fine-tunes from the rewound weights with every optimizer step projected
/// through the mask, so frozen coordinates keep their deployed bits.
///
/// `train_loss_full` is the caller-measured loss of the fully updated
/// weights, carried through into the result. The optimizer runs on full
/// gradients (moments included); only the applied increment is masked.
pub fn sparse_finetune(
    base: &WeightVector,
    w_start: &WeightVector,
    mask: Mask,
    batches: &mut dyn BatchSource,
    train_set: &Batch,
    plan: &TrainPlan,
    train_loss_full: f64,
) -> Result<PartialUpdateResult> {
    if base.arch() != w_start.arch() {
        return Err(Error::DimensionMismatch("architectures differ".into()));
    }
    let arch = base.arch().clone();
    let icount = arch.weight_count();
    if mask.len() != icount {
        return Err(Error::DimensionMismatch(format!(
            "mask len {} vs weight count {icount}",
            mask.len()
        )));
    }
    if !train_loss_full.is_finite() {
        return Err(Error::NonFinite("full-update loss".into()));
    }
    for (i, (a, b)) in base.values().iter().zip(w_start.values()).enumerate() {
        if !mask.is_set(i) && a.to_bits() != b.to_bits() {
            return Err(Error::InvalidInput(format!(
                "start weights differ from base at frozen coordinate {i}"
            )));
        }
    }

    let mut eval = Evaluator::new(&arch);
    let train_loss_rewound = eval.batch_loss(w_start.values(), train_set)?;

    let mut values = w_start.values().to_vec();
    let mut opt = plan.fresh_state(icount)?;
    let mut grad = vec![0.0; icount];
    let mut delta = vec![0.0; icount];
    for q in 1..=plan.iterations {
        let batch = batches.next_batch();
        eval.loss_and_gradient_into(&values, batch, &mut grad)?;
        opt.step_into(&grad, q, &mut delta)?;
        for i in mask.ones() {
            values[i] += delta[i];
        }
    }

    // Materialize the transmitted delta and re-derive the new weights from
    // it, so `w_new = base + densify(delta)` holds exactly as written.
    let mut indices = Vec::with_capacity(mask.cardinality());
    let mut dvals = Vec::with_capacity(mask.cardinality());
    let mut new_values = base.values().to_vec();
    for i in mask.ones() {
        let d = values[i] - base.values()[i];
        indices.push(i as u32);
        dvals.push(d);
        new_values[i] = base.values()[i] + d;
    }
    let delta = SparseDelta::new(icount, indices, dvals)?;
    let w_new = WeightVector::from_values(arch, new_values)?;
    let train_loss_final = eval.batch_loss(w_new.values(), train_set)?;

    Ok(PartialUpdateResult {
        w_new,
        mask,
        delta,
        train_loss_full,
        train_loss_rewound,
        train_loss_final,
    })
}

/// One round selecting by global contribution alone.
pub fn gcpu_round(
    w: &WeightVector,
    batches: &mut dyn BatchSource,
    train_set: &Batch,
    k: f64,
    plan: &TrainPlan,
) -> Result<PartialUpdateResult> {
    let w_f = full_update_step(w, batches, plan, None)?;
    let mut eval = Evaluator::new(w.arch());
    let loss_full = eval.batch_loss(w_f.values(), train_set)?;
    let c_g = global_contribution(w, &w_f)?;
    let mask = select_mask(&c_g, k)?;
    let w_start = rewind(w, &w_f, &mask)?;
    sparse_finetune(w, &w_start, mask, batches, train_set, plan, loss_full)
}

/// One round selecting by the combined global and path-accumulated local
/// contributions.
pub fn dpu_round(
    w: &WeightVector,
    batches: &mut dyn BatchSource,
    train_set: &Batch,
    k: f64,
    plan: &TrainPlan,
) -> Result<PartialUpdateResult> {
    let mut trace = TraceState::new(w.len());
    let w_f = full_update_step(w, batches, plan, Some(&mut trace))?;
    let mut eval = Evaluator::new(w.arch());
    let loss_full = eval.batch_loss(w_f.values(), train_set)?;
    let c_g = global_contribution(w, &w_f)?;
    let c_l = trace.into_local()?;
    let c = combine(&c_g, &c_l)?;
    let mask = select_mask(&c, k)?;
    let w_start = rewind(w, &w_f, &mask)?;
    sparse_finetune(w, &w_start, mask, batches, train_set, plan, loss_full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contribution::ContributionKind;
    use crate::nn::{init_weights, FullBatches};
    use crate::testutil::blob_batch;

    fn cv(values: &[f64]) -> ContributionVector {
        ContributionVector::new(values.to_vec(), ContributionKind::Combined).unwrap()
    }

    fn plan_sgd(rate: f64, iterations: usize) -> TrainPlan {
        let sched = LrSchedule::constant(rate, iterations).unwrap();
        TrainPlan::new(OptimizerKind::Sgd, sched, iterations).unwrap()
    }

    fn ulp_diff(a: f64, b: f64) -> u64 {
        (a.to_bits() as i64).abs_diff(b.to_bits() as i64)
    }

    #[test]
    fn target_count_rounds_and_clamps() {
        assert_eq!(target_k_count(17, 0.1).unwrap(), 2);
        assert_eq!(target_k_count(100, 0.01).unwrap(), 1);
        assert_eq!(target_k_count(10, 1.0).unwrap(), 10);
        // Halves round up, tiny ratios clamp to one weight.
        assert_eq!(target_k_count(10, 0.25).unwrap(), 3);
        assert_eq!(target_k_count(100, 0.001).unwrap(), 1);
        assert!(target_k_count(10, 0.0).is_err());
        assert!(target_k_count(10, 1.1).is_err());
        assert!(target_k_count(10, f64::NAN).is_err());
        assert!(target_k_count(0, 0.5).is_err());
    }

    #[test]
    fn select_picks_largest() {
        let mask = select_mask(&cv(&[0.3, 0.1, 0.9]), 0.3).unwrap();
        assert_eq!(mask.bits(), &[false, false, true]);
        assert_eq!(mask.cardinality(), 1);
    }

    #[test]
    fn select_tie_breaks_low_index() {
        let mask = select_mask(&cv(&[0.5, 0.5, 0.1]), 0.3).unwrap();
        assert_eq!(mask.bits(), &[true, false, false]);
        // Signed zeros tie as equals.
        let mask = select_mask(&cv(&[0.0, -0.0, -1.0]), 0.3).unwrap();
        assert_eq!(mask.bits(), &[true, false, false]);
    }

    #[test]
    fn select_scale_invariant() {
        let c = cv(&[0.4, 0.9, 0.2, 0.7, 0.5]);
        let scaled = cv(&c.values().iter().map(|v| 10.0 * v).collect::<Vec<_>>());
        for k in [0.2, 0.4, 0.8, 1.0] {
            let a = select_mask(&c, k).unwrap();
            let b = select_mask(&scaled, k).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rewind_mixes_bit_exactly() {
        let arch = Architecture::new(vec![1, 1]).unwrap();
        let w = WeightVector::from_values(arch.clone(), vec![1.0, 2.0]).unwrap();
        let w_f = WeightVector::from_values(arch.clone(), vec![5.0, 7.0]).unwrap();
        let mask = Mask::from_bits(vec![true, false]).unwrap();
        let r = rewind(&w, &w_f, &mask).unwrap();
        assert_eq!(r.values(), &[5.0, 2.0]);

        let all = Mask::from_bits(vec![true, true]).unwrap();
        assert_eq!(rewind(&w, &w_f, &all).unwrap().values(), w_f.values());
        let none = Mask::from_bits(vec![false, false]).unwrap();
        assert_eq!(rewind(&w, &w_f, &none).unwrap().values(), w.values());
    }

    #[test]
    fn rpu_mask_per_layer_counts() {
        let arch = Architecture::new(vec![4, 10, 3]).unwrap();
        // Layer sizes: 4*10+10 = 50 and 10*3+3 = 33.
        let mask = rpu_mask(&arch, 0.1, 7).unwrap();
        let first = arch.layer_range(0);
        let in_first = mask.ones().filter(|&i| first.contains(&i)).count();
        assert_eq!(in_first, 5);
        assert_eq!(mask.cardinality() - in_first, 3);

        let full = rpu_mask(&arch, 1.0, 7).unwrap();
        assert_eq!(full.cardinality(), arch.weight_count());

        assert_eq!(rpu_mask(&arch, 0.1, 7).unwrap(), mask);
        assert_ne!(rpu_mask(&arch, 0.1, 8).unwrap(), mask);
    }

    #[test]
    fn random_mask_exact_cardinality() {
        let mask = random_mask(200, 0.05, 3).unwrap();
        assert_eq!(mask.cardinality(), 10);
        assert_eq!(random_mask(200, 0.05, 3).unwrap(), mask);
        assert_ne!(random_mask(200, 0.05, 4).unwrap(), mask);
    }

    #[test]
    fn finetune_freezes_off_mask_coordinates() {
        let arch = Architecture::new(vec![2, 6, 3]).unwrap();
        let base = init_weights(&arch, 11);
        let data = blob_batch(&arch, 20, 0.4, 21);
        let plan = plan_sgd(0.05, 50);
        let mut batches = FullBatches::new(data.clone());
        let w_f = full_update_step(&base, &mut batches, &plan, None).unwrap();
        let mask = random_mask(arch.weight_count(), 0.3, 5).unwrap();
        let w_start = rewind(&base, &w_f, &mask).unwrap();
        let loss_full = crate::nn::batch_loss(&w_f, &data).unwrap();
        let out =
            sparse_finetune(&base, &w_start, mask.clone(), &mut batches, &data, &plan, loss_full)
                .unwrap();

        for i in 0..arch.weight_count() {
            if !mask.is_set(i) {
                assert_eq!(out.w_new.values()[i].to_bits(), base.values()[i].to_bits());
            }
        }
        assert_eq!(out.delta.nnz(), mask.cardinality());
        let rebuilt = out.delta.apply(base.values()).unwrap();
        for (a, b) in rebuilt.iter().zip(out.w_new.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn finetune_all_zeros_mask_returns_base() {
        let arch = Architecture::new(vec![2, 4, 2]).unwrap();
        let base = init_weights(&arch, 3);
        let data = blob_batch(&arch, 10, 0.4, 4);
        let plan = plan_sgd(0.05, 30);
        let mask = Mask::from_indices(arch.weight_count(), &[]).unwrap();
        let mut batches = FullBatches::new(data.clone());
        let out =
            sparse_finetune(&base, &base, mask, &mut batches, &data, &plan, 1.0).unwrap();
        assert_eq!(out.w_new.values(), base.values());
        assert_eq!(out.delta.nnz(), 0);
    }

    #[test]
    fn finetune_all_ones_matches_unconstrained() {
        let arch = Architecture::new(vec![2, 5, 2]).unwrap();
        let base = init_weights(&arch, 9);
        let data = blob_batch(&arch, 16, 0.35, 10);
        let plan = plan_sgd(0.05, 40);
        let mut batches = FullBatches::new(data.clone());
        let w_f = full_update_step(&base, &mut batches, &plan, None).unwrap();
        let mask = Mask::from_bits(vec![true; arch.weight_count()]).unwrap();
        let w_start = rewind(&base, &w_f, &mask).unwrap();
        let out = sparse_finetune(&base, &w_start, mask, &mut batches, &data, &plan, 0.5).unwrap();
        let mut again = FullBatches::new(data.clone());
        let unconstrained = full_update_step(&w_f, &mut again, &plan, None).unwrap();
        // The delta round trip may cost one ulp per coordinate.
        for (a, b) in out.w_new.values().iter().zip(unconstrained.values()) {
            assert!(ulp_diff(*a, *b) <= 1, "{a} vs {b}");
        }
    }

    #[test]
    fn finetune_descends_from_rewound_loss() {
        let arch = Architecture::new(vec![2, 8, 3]).unwrap();
        let base = init_weights(&arch, 17);
        let data = blob_batch(&arch, 20, 0.3, 18);
        let plan = plan_sgd(0.01, 200);
        let mut batches = FullBatches::new(data.clone());
        let w_f = full_update_step(&base, &mut batches, &plan, None).unwrap();
        let c_g = global_contribution(&base, &w_f).unwrap();
        let mask = select_mask(&c_g, 0.5).unwrap();
        let w_start = rewind(&base, &w_f, &mask).unwrap();
        let loss_full = crate::nn::batch_loss(&w_f, &data).unwrap();
        let out =
            sparse_finetune(&base, &w_start, mask, &mut batches, &data, &plan, loss_full).unwrap();
        assert!(
            out.train_loss_final <= out.train_loss_rewound + 1e-9,
            "{} vs {}",
            out.train_loss_final,
            out.train_loss_rewound
        );
    }

    #[test]
    fn finetune_rejects_tampered_start() {
        let arch = Architecture::new(vec![1, 1]).unwrap();
        let base = WeightVector::from_values(arch.clone(), vec![1.0, 2.0]).unwrap();
        let start = WeightVector::from_values(arch.clone(), vec![1.0, 2.5]).unwrap();
        let mask = Mask::from_bits(vec![true, false]).unwrap();
        let data = Batch::new(vec![0.5], 1, vec![0]).unwrap();
        let plan = plan_sgd(0.1, 1);
        let mut batches = FullBatches::new(data.clone());
        let err = sparse_finetune(&base, &start, mask, &mut batches, &data, &plan, 0.1);
        assert!(err.is_err());
    }

    #[test]
    fn round_procedures_deterministic_and_saturating() {
        let arch = Architecture::new(vec![2, 6, 3]).unwrap();
        let w = init_weights(&arch, 31);
        let data = blob_batch(&arch, 15, 0.3, 32);
        let plan = plan_sgd(0.05, 30);

        let run_gcpu = || {
            let mut b = FullBatches::new(data.clone());
            gcpu_round(&w, &mut b, &data, 1.0, &plan).unwrap()
        };
        let g1 = run_gcpu();
        let g2 = run_gcpu();
        for (a, b) in g1.w_new.values().iter().zip(g2.w_new.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        let mut b = FullBatches::new(data.clone());
        let d = dpu_round(&w, &mut b, &data, 1.0, &plan).unwrap();
        assert_eq!(d.mask.cardinality(), arch.weight_count());
        for (a, b) in d.w_new.values().iter().zip(g1.w_new.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn dpu_freezes_unselected() {
        let arch = Architecture::new(vec![2, 6, 3]).unwrap();
        let w = init_weights(&arch, 41);
        let data = blob_batch(&arch, 15, 0.3, 42);
        let plan = plan_sgd(0.05, 25);
        let mut b = FullBatches::new(data.clone());
        let out = dpu_round(&w, &mut b, &data, 0.1, &plan).unwrap();
        assert_eq!(out.mask.cardinality(), target_k_count(arch.weight_count(), 0.1).unwrap());
        for i in 0..arch.weight_count() {
            if !out.mask.is_set(i) {
                assert_eq!(out.w_new.values()[i].to_bits(), w.values()[i].to_bits());
            }
        }
    }

    #[test]
    fn gcpu_mask_is_top_displacement() {
        let arch = Architecture::new(vec![2, 6, 3]).unwrap();
        let w = init_weights(&arch, 51);
        let data = blob_batch(&arch, 15, 0.3, 52);
        let plan = plan_sgd(0.05, 30);
        let mut b = FullBatches::new(data.clone());
        let w_f = full_update_step(&w, &mut b, &plan, None).unwrap();
        let loss_full = crate::nn::batch_loss(&w_f, &data).unwrap();
        let c_g = global_contribution(&w, &w_f).unwrap();
        let mask = select_mask(&c_g, 0.1).unwrap();
        let w_start = rewind(&w, &w_f, &mask).unwrap();
        let direct =
            sparse_finetune(&w, &w_start, mask.clone(), &mut b, &data, &plan, loss_full).unwrap();

        let mut b2 = FullBatches::new(data.clone());
        let packaged = gcpu_round(&w, &mut b2, &data, 0.1, &plan).unwrap();
        assert_eq!(packaged.mask, mask);
        for (a, b) in packaged.w_new.values().iter().zip(direct.w_new.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn delta_validation() {
        assert!(SparseDelta::new(4, vec![0, 0], vec![1.0, 2.0]).is_err());
        assert!(SparseDelta::new(4, vec![0, 5], vec![1.0, 2.0]).is_err());
        assert!(SparseDelta::new(4, vec![0], vec![f64::INFINITY]).is_err());
        let d = SparseDelta::new(4, vec![1, 3], vec![0.5, -0.5]).unwrap();
        assert_eq!(d.densify(), vec![0.0, 0.5, 0.0, -0.5]);
        assert_eq!(d.apply(&[1.0, 1.0, 1.0, 1.0]).unwrap(), vec![1.0, 1.5, 1.0, 0.5]);
        assert!(d.apply(&[1.0]).is_err());
    }

    #[test]
    fn mask_validation() {
        assert!(Mask::from_bits(vec![]).is_err());
        assert!(Mask::from_indices(3, &[3]).is_err());
        assert!(Mask::from_indices(3, &[1, 1]).is_err());
        let m = Mask::from_indices(5, &[4, 0]).unwrap();
        assert_eq!(m.ones().collect::<Vec<_>>(), vec![0, 4]);
        assert_eq!(m.cardinality(), 2);
    }
}
