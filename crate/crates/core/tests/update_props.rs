//! Property tests for mask selection, rewinding, and masked fine-tuning.

use proptest::prelude::*;

use partup::contribution::ContributionKind;
use partup::data::{generate_synthetic, ShuffledBatches, SyntheticParams};
use partup::nn::{batch_loss, init_weights, Architecture, WeightVector};
use partup::optim::{LrSchedule, OptimizerKind};
use partup::update::{
    dpu_round, full_update_step, random_mask, rewind, rpu_mask, select_mask, sparse_finetune,
    target_k_count, Mask, TrainPlan,
};
use partup::ContributionVector;

fn combined(values: Vec<f64>) -> ContributionVector {
    ContributionVector::new(values, ContributionKind::Combined).unwrap()
}

/// Quadratic-time oracle: repeatedly take the argmax (lowest index on ties)
/// and remove it.
fn argmax_removal(values: &[f64], count: usize) -> Vec<usize> {
    let mut remaining: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
    let mut picked = Vec::with_capacity(count);
    for _ in 0..count {
        let best = remaining
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0))
            })
            .map(|(pos, _)| pos)
            .unwrap();
        picked.push(remaining.remove(best).0);
    }
    picked.sort_unstable();
    picked
}

proptest! {
    #[test]
    fn cardinality_is_exact(
        values in prop::collection::vec(-1e3f64..1e3, 1..400),
        k in 0.001f64..1.0,
    ) {
        let i = values.len();
        let mask = select_mask(&combined(values), k).unwrap();
        prop_assert_eq!(mask.cardinality(), target_k_count(i, k).unwrap());
    }

    #[test]
    fn selection_matches_argmax_removal_oracle(
        values in prop::collection::vec(
            prop_oneof![Just(0.0f64), Just(0.25), Just(0.5), Just(1.0), Just(2.0)],
            1..1000,
        ),
        k in 0.01f64..1.0,
    ) {
        let count = target_k_count(values.len(), k).unwrap();
        let oracle = argmax_removal(&values, count);
        let mask = select_mask(&combined(values), k).unwrap();
        prop_assert_eq!(mask.ones().collect::<Vec<_>>(), oracle);
    }

    #[test]
    fn selection_invariant_under_monotone_transforms(
        values in prop::collection::vec(1e-4f64..100.0, 1..300),
        scale in 0.1f64..10.0,
        k in 0.01f64..1.0,
    ) {
        let base = select_mask(&combined(values.clone()), k).unwrap();
        let scaled = select_mask(
            &combined(values.iter().map(|v| scale * v).collect()),
            k,
        )
        .unwrap();
        let cubed = select_mask(
            &combined(values.iter().map(|v| v * v * v).collect()),
            k,
        )
        .unwrap();
        prop_assert_eq!(base.bits(), scaled.bits());
        prop_assert_eq!(base.bits(), cubed.bits());
    }

    #[test]
    fn rewind_copies_bits_exactly(
        pair in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, any::<bool>()), 26..=26),
    ) {
        let arch = Architecture::new(vec![3, 4, 2]).unwrap();
        let w = WeightVector::from_values(arch.clone(), pair.iter().map(|p| p.0).collect()).unwrap();
        let w_f = WeightVector::from_values(arch, pair.iter().map(|p| p.1).collect()).unwrap();
        let mask = Mask::from_bits(pair.iter().map(|p| p.2).collect()).unwrap();
        let out = rewind(&w, &w_f, &mask).unwrap();
        for i in 0..out.len() {
            let expect = if mask.bits()[i] { w_f.values()[i] } else { w.values()[i] };
            prop_assert_eq!(out.values()[i].to_bits(), expect.to_bits());
        }
    }

    #[test]
    fn rpu_mask_counts_per_layer(seed in any::<u64>(), k in 0.001f64..1.0) {
        let arch = Architecture::new(vec![5, 9, 4]).unwrap();
        let mask = rpu_mask(&arch, k, seed).unwrap();
        let mut covered = 0;
        for layer in 0..arch.affine_layers() {
            let range = arch.layer_range(layer);
            let ones = mask.bits()[range.clone()].iter().filter(|&&b| b).count();
            prop_assert_eq!(ones, (k * range.len() as f64).round() as usize);
            covered += range.len();
        }
        prop_assert_eq!(covered, mask.len());
        let again = rpu_mask(&arch, k, seed).unwrap();
        prop_assert_eq!(mask.bits(), again.bits());
    }
}

fn blob_stream(n: usize, seed: u64) -> (ShuffledBatches, partup::Batch) {
    let train = generate_synthetic(
        &SyntheticParams { classes: 3, dims: 2, sigma: 0.4, count: n },
        seed,
    )
    .unwrap();
    (ShuffledBatches::new(train.clone(), 16, seed ^ 0xA5).unwrap(), train)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn finetune_projection_is_sound(mask_seed in any::<u64>(), k in 0.02f64..1.0) {
        let arch = Architecture::new(vec![2, 6, 3]).unwrap();
        let base = init_weights(&arch, 3);
        let (mut batches, train) = blob_stream(48, 5);
        let plan = TrainPlan::new(
            OptimizerKind::Sgd,
            LrSchedule::constant(0.05, 30).unwrap(),
            30,
        )
        .unwrap();
        let w_f = full_update_step(&base, &mut batches, &plan, None).unwrap();
        let mask = random_mask(base.len(), k, mask_seed).unwrap();
        let w_start = rewind(&base, &w_f, &mask).unwrap();
        let loss_full = batch_loss(&w_f, &train).unwrap();
        let result = sparse_finetune(
            &base, &w_start, mask.clone(), &mut batches, &train, &plan, loss_full,
        )
        .unwrap();

        // Frozen coordinates are untouched and the delta respects the mask.
        let mut nonzero = 0;
        for i in 0..base.len() {
            let moved = result.w_new.values()[i].to_bits() != base.values()[i].to_bits();
            if moved {
                nonzero += 1;
            }
            if !mask.bits()[i] {
                prop_assert!(!moved);
            }
        }
        prop_assert!(nonzero <= mask.cardinality());
        for (i, _) in result.delta.iter() {
            prop_assert!(mask.bits()[i]);
        }

        // base + densified delta reproduces w_new bit-exactly.
        let mut rebuilt = base.values().to_vec();
        for (i, v) in result.delta.iter() {
            rebuilt[i] += v;
        }
        for i in 0..rebuilt.len() {
            prop_assert_eq!(rebuilt[i].to_bits(), result.w_new.values()[i].to_bits());
        }
    }
}

#[test]
fn dpu_mask_beats_random_mask_on_rewound_loss() {
    let arch = Architecture::new(vec![2, 12, 3]).unwrap();
    let plan = TrainPlan::new(
        OptimizerKind::Sgd,
        LrSchedule::constant(0.1, 60).unwrap(),
        60,
    )
    .unwrap();
    let k = 0.1;
    let (mut dpu_sum, mut random_sum) = (0.0, 0.0);
    for seed in 1..=5u64 {
        let w = init_weights(&arch, seed);
        let (mut batches, train) = blob_stream(60, 100 + seed);
        let result = dpu_round(&w, &mut batches, &train, k, &plan).unwrap();
        dpu_sum += result.train_loss_rewound;

        // Identical stream seed reproduces the same w_f for the baseline.
        let (mut batches, _) = blob_stream(60, 100 + seed);
        let w_f = full_update_step(&w, &mut batches, &plan, None).unwrap();
        let mask = random_mask(w.len(), k, 777 + seed).unwrap();
        random_sum += batch_loss(&rewind(&w, &w_f, &mask).unwrap(), &train).unwrap();
    }
    assert!(
        dpu_sum / 5.0 <= random_sum / 5.0,
        "rewound loss: contribution mask {} vs random {}",
        dpu_sum / 5.0,
        random_sum / 5.0
    );
}

#[test]
fn finetune_descends_on_full_batch_fixture() {
    let arch = Architecture::new(vec![2, 10, 3]).unwrap();
    let base = init_weights(&arch, 8);
    let train = generate_synthetic(
        &SyntheticParams { classes: 3, dims: 2, sigma: 0.4, count: 45 },
        11,
    )
    .unwrap();
    let plan = TrainPlan::new(
        OptimizerKind::Sgd,
        LrSchedule::constant(0.02, 200).unwrap(),
        200,
    )
    .unwrap();
    let mut full = partup::nn::FullBatches::new(train.clone());
    let w_f = full_update_step(&base, &mut full, &plan, None).unwrap();
    let values: Vec<f64> = (0..base.len()).map(|i| (i as f64).sin().abs() + 0.01).collect();
    let mask = select_mask(&combined(values), 0.5).unwrap();
    let w_start = rewind(&base, &w_f, &mask).unwrap();
    let loss_full = batch_loss(&w_f, &train).unwrap();
    let result = sparse_finetune(
        &base,
        &w_start,
        mask,
        &mut full,
        &train,
        &plan,
        loss_full,
    )
    .unwrap();
    assert!(result.train_loss_final <= result.train_loss_rewound + 1e-9);
}
