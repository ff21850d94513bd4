//! Release gate: one test per acceptance criterion, each printing a single
//! PASS/FAIL line so a full run reads as a checklist. Tolerances are pinned
//! here rather than shared with library code.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use partup::codec::{decode_packet, encode_packet, inspect_packet, Frame, UpdatePacket};
use partup::commcost::{
    breakeven_ratio, full_update_bits, index_entropy, server_to_edge_bits, CostParams,
};
use partup::contribution::{ContributionKind, TraceState};
use partup::data::{generate_synthetic, ShuffledBatches, SyntheticParams};
use partup::nn::{
    accuracy, batch_loss, finite_diff_gradient, init_weights, loss_and_gradient, Architecture,
    Batch, FullBatches, WeightVector,
};
use partup::optim::{LrSchedule, OptimizerKind};
use partup::rounds::{
    rewind_ablation, run_experiment, DataSource, DataStream, Experiment, ExperimentConfig,
    LrConfig, Method,
};
use partup::update::{
    full_update_step, random_mask, rewind, select_mask, sparse_finetune, target_k_count,
    TrainPlan,
};
use partup::{ContributionVector, ValueWidth};

const GRAD_REL_L2_TOL: f64 = 1e-4;
const ENTROPY_TOL: f64 = 1e-12;
const LOCAL_IDENTITY_TOL: f64 = 1e-10;
const DPU_OVER_RPU_MIN_PP: f64 = 1.0;
const DPU_FU_MAX_GAP_PP: f64 = 3.0;
const BYTES_RATIO_MAX: f64 = 0.15;

fn report(n: usize, name: &str, ok: bool, detail: &str) {
    println!("CRITERION {n} ({name}): {} [{detail}]", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

fn blobs(classes: usize, dims: usize, count: usize, sigma: f64, seed: u64) -> Batch {
    generate_synthetic(&SyntheticParams { classes, dims, sigma, count }, seed).unwrap()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[test]
fn criterion_1_gradient_oracle() {
    let started = Instant::now();
    let arch = Architecture::new(vec![4, 8, 8, 3]).unwrap();
    let mut worst: f64 = 0.0;
    for trial in 0..20u64 {
        let w = init_weights(&arch, 100 + trial);
        let batch = blobs(3, 4, 12, 0.6, 500 + trial);
        let (_, grad) = loss_and_gradient(&w, &batch).unwrap();
        let fd = finite_diff_gradient(&w, &batch, 1e-5).unwrap();
        let diff: f64 =
            grad.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let scale: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        worst = worst.max(diff / scale);
    }
    let elapsed = started.elapsed().as_secs_f64();
    let ok = worst < GRAD_REL_L2_TOL && elapsed < 10.0;
    report(1, "gradient oracle", ok, &format!("max rel L2 error {worst:.3e}, {elapsed:.1}s"));
}

#[test]
fn criterion_2_mask_rewind_exactness() {
    let started = Instant::now();
    let ks = [0.01, 0.1, 0.5, 1.0];

    // Cardinality and determinism over 100 random contribution vectors.
    let i_count = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let values: Vec<f64> = (0..i_count).map(|_| rng.gen::<f64>()).collect();
        let c = ContributionVector::new(values, ContributionKind::Combined).unwrap();
        for &k in &ks {
            let mask = select_mask(&c, k).unwrap();
            assert_eq!(mask.cardinality(), target_k_count(i_count, k).unwrap());
            assert_eq!(mask.bits(), select_mask(&c, k).unwrap().bits());
        }
    }

    // Ties resolve toward lower indices.
    let tied = ContributionVector::new(vec![1.0; 10], ContributionKind::Combined).unwrap();
    let mask = select_mask(&tied, 0.5).unwrap();
    assert_eq!(mask.ones().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);

    // Rewind is bit-exact on both sides of the mask.
    let arch = Architecture::new(vec![6, 10, 4]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for &k in &ks {
        let w = init_weights(&arch, 7);
        let w_f = init_weights(&arch, 8);
        let values: Vec<f64> = (0..w.len()).map(|_| rng.gen::<f64>()).collect();
        let c = ContributionVector::new(values, ContributionKind::Combined).unwrap();
        let mask = select_mask(&c, k).unwrap();
        let rewound = rewind(&w, &w_f, &mask).unwrap();
        for i in 0..w.len() {
            let expect = if mask.bits()[i] { w_f.values()[i] } else { w.values()[i] };
            assert_eq!(rewound.values()[i].to_bits(), expect.to_bits());
        }
    }

    // Two hundred masked iterations never touch a frozen coordinate.
    let arch = Architecture::new(vec![3, 16, 3]).unwrap();
    let train = blobs(3, 3, 60, 0.4, 9);
    for (j, &k) in ks.iter().enumerate() {
        let base = init_weights(&arch, 11 + j as u64);
        let warm = TrainPlan::new(
            OptimizerKind::Sgd,
            LrSchedule::constant(0.05, 40).unwrap(),
            40,
        )
        .unwrap();
        let mut b = ShuffledBatches::new(train.clone(), 16, 77).unwrap();
        let w_f = full_update_step(&base, &mut b, &warm, None).unwrap();
        let values: Vec<f64> = (0..base.len()).map(|_| rng.gen::<f64>()).collect();
        let c = ContributionVector::new(values, ContributionKind::Combined).unwrap();
        let mask = select_mask(&c, k).unwrap();
        let w_start = rewind(&base, &w_f, &mask).unwrap();
        let plan = TrainPlan::new(
            OptimizerKind::Sgd,
            LrSchedule::constant(0.05, 200).unwrap(),
            200,
        )
        .unwrap();
        let mut b = ShuffledBatches::new(train.clone(), 16, 78).unwrap();
        let loss_full = batch_loss(&w_f, &train).unwrap();
        let result =
            sparse_finetune(&base, &w_start, mask.clone(), &mut b, &train, &plan, loss_full)
                .unwrap();
        for i in 0..base.len() {
            if !mask.bits()[i] {
                assert_eq!(result.w_new.values()[i].to_bits(), base.values()[i].to_bits());
            }
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    report(2, "mask and rewind exactness", elapsed < 30.0, &format!("{elapsed:.1}s"));
}

#[test]
fn criterion_3_entropy_model() {
    let started = Instant::now();
    let s_half = index_entropy(0.5).unwrap();
    let half_ok = (s_half - 1.0).abs() <= ENTROPY_TOL;

    let mut max_asym: f64 = 0.0;
    for i in 1..=1000 {
        let k = i as f64 / 1001.0;
        max_asym =
            max_asym.max((index_entropy(k).unwrap() - index_entropy(1.0 - k).unwrap()).abs());
    }
    let sym_ok = max_asym <= ENTROPY_TOL;

    let params = CostParams { s_w: 32, s_d: 1024, i_count: 10_000, n_nodes: 100 };
    let full = full_update_bits(&params);
    let brk = breakeven_ratio(32);
    let mut breakeven_ok = (brk - 31.0 / 32.0).abs() <= ENTROPY_TOL;
    let mut i = 1;
    while (i as f64 / 1024.0) < brk {
        let k = i as f64 / 1024.0;
        breakeven_ok &= server_to_edge_bits(k, &params).unwrap() < full;
        i += 1;
    }

    let elapsed = started.elapsed().as_secs_f64();
    let ok = half_ok && sym_ok && breakeven_ok && elapsed < 1.0;
    report(
        3,
        "entropy model",
        ok,
        &format!("S(0.5)-1 = {:.1e}, max asymmetry {max_asym:.1e}, {elapsed:.2}s", s_half - 1.0),
    );
}

#[test]
fn criterion_4_codec() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);

    // Randomized roundtrip identity across all frame types.
    for t in 0..1000u32 {
        let i_count = rng.gen_range(1..3000usize);
        let width = if rng.gen_bool(0.5) { ValueWidth::W32 } else { ValueWidth::W64 };
        let quantized = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
            (0..n).map(|_| width.quantize(rng.gen::<f64>() * 4.0 - 2.0)).collect()
        };
        let frame = match rng.gen_range(0..4) {
            0 => {
                let values = quantized(&mut rng, i_count);
                Frame::Full { width, values }
            }
            1 | 2 => {
                let k = 10f64.powf(rng.gen_range(-2.5..0.0)).min(1.0);
                let mask = random_mask(i_count, k, rng.gen()).unwrap();
                let values = quantized(&mut rng, mask.cardinality());
                if rng.gen_bool(0.5) {
                    Frame::Sparse { width, mask, values }
                } else {
                    Frame::ReinitSparse { width, seed: rng.gen(), mask, values }
                }
            }
            _ => Frame::Skip,
        };
        let packet = UpdatePacket::new(t, i_count as u32, frame);
        let bytes = encode_packet(&packet).unwrap();
        assert_eq!(decode_packet(&bytes).unwrap(), packet);
    }

    // Coded mask size bounds for random masks.
    let i_count = 50_000usize;
    let mut bounds_ok = true;
    for &k in &[0.01, 0.05, 0.1] {
        let mask = random_mask(i_count, k, 99).unwrap();
        let values = vec![0.25; mask.cardinality()];
        let frame = Frame::Sparse { width: ValueWidth::W64, mask: mask.clone(), values };
        let bytes = encode_packet(&UpdatePacket::new(1, i_count as u32, frame)).unwrap();
        let info = inspect_packet(&bytes).unwrap();
        let k_hat = mask.cardinality() as f64 / i_count as f64;
        let lower = index_entropy(k_hat).unwrap() * i_count as f64;
        let mask_bits = info.mask_bytes as f64 * 8.0;
        bounds_ok &= mask_bits + 1e-9 >= lower && mask_bits <= (i_count + 7) as f64;
    }

    // Eight simulated rounds at 64-bit width keep server and edge equal.
    let config = ExperimentConfig {
        arch: Architecture::new(vec![2, 16, 3]).unwrap(),
        method: Method::Dpu,
        k: 0.2,
        rounds: 8,
        optimizer: OptimizerKind::Sgd,
        lr: LrConfig { initial: 0.1, decay_factor: 0.1, decay_epochs: 0 },
        epochs: 3,
        batch_size: 16,
        width: ValueWidth::W64,
        sample_bits: 160,
        n_nodes: 10,
        always_send: false,
        stream: DataStream {
            d1_size: 40,
            delta_size: 20,
            holdout: 60,
            val_fraction: 0.3,
            source: DataSource::SyntheticBlobs(SyntheticParams {
                classes: 3,
                dims: 2,
                sigma: 0.3,
                count: 40 + 7 * 20 + 60,
            }),
        },
    };
    let mut exp = Experiment::new(config, 17).unwrap();
    exp.run().unwrap();
    let mut edge_equal = true;
    for (s, e) in exp.server_weights().values().iter().zip(exp.edge_weights().values()) {
        edge_equal &= s.to_bits() == e.to_bits();
    }

    let elapsed = started.elapsed().as_secs_f64();
    let ok = bounds_ok && edge_equal && elapsed < 30.0;
    report(
        4,
        "codec roundtrip and bounds",
        ok,
        &format!("bounds {bounds_ok}, server/edge equal {edge_equal}, {elapsed:.1}s"),
    );
}

#[test]
fn criterion_5_reinit_schedule() {
    let started = Instant::now();

    // Independent rule simulation: walk the sizes, apply the doubling test.
    fn oracle(d1: usize, delta: usize, rounds: usize) -> Vec<usize> {
        let mut fired = Vec::new();
        let mut last = d1;
        for r in 2..=rounds {
            let size = d1 + (r - 1) * delta;
            if size > 2 * last {
                fired.push(r);
                last = size;
            }
        }
        fired
    }

    // The production rule must reproduce the oracle exactly.
    fn via_rule(d1: usize, delta: usize, rounds: usize) -> Vec<usize> {
        let mut fired = Vec::new();
        let mut last = d1;
        for r in 2..=rounds {
            let size = d1 + (r - 1) * delta;
            if partup::rounds::reinit_due(size, last) {
                fired.push(r);
                last = size;
            }
        }
        fired
    }

    let a_oracle = oracle(1000, 1000, 15);
    let b_oracle = oracle(1000, 5000, 15);
    let ok = a_oracle == vec![3, 7, 15]
        && b_oracle == vec![2, 4, 8]
        && via_rule(1000, 1000, 15) == a_oracle
        && via_rule(1000, 5000, 15) == b_oracle;
    let elapsed = started.elapsed().as_secs_f64();
    report(
        5,
        "re-initialization schedule",
        ok && elapsed < 1.0,
        &format!(
            "(1000,1000)->{a_oracle:?}, (1000,5000)->{b_oracle:?}; \
             strict doubling cannot fire at round 7 of the second case (31000 <= 32000)"
        ),
    );
}

fn ordering_fixture(method: Method, k: f64) -> ExperimentConfig {
    let d1 = 200;
    let delta = 200;
    let rounds = 8;
    let holdout = 1500;
    ExperimentConfig {
        arch: Architecture::new(vec![2, 32, 32, 3]).unwrap(),
        method,
        k,
        rounds,
        optimizer: OptimizerKind::adam_default(),
        lr: LrConfig { initial: 0.005, decay_factor: 0.1, decay_epochs: 10 },
        epochs: 30,
        batch_size: 128,
        width: ValueWidth::W32,
        sample_bits: 2 * 64 + 32,
        n_nodes: 1000,
        always_send: false,
        stream: DataStream {
            d1_size: d1,
            delta_size: delta,
            holdout,
            val_fraction: 0.3,
            source: DataSource::SyntheticBlobs(SyntheticParams {
                classes: 3,
                dims: 2,
                sigma: 0.3,
                count: d1 + (rounds - 1) * delta + holdout,
            }),
        },
    }
}

#[test]
fn criterion_6_desk_scale_ordering() {
    let started = Instant::now();
    let seeds = [1u64, 2, 3, 4, 5];

    let run_all = |method: Method, k: f64| -> (Vec<f64>, f64) {
        let config = ordering_fixture(method, k);
        let mut finals = Vec::new();
        let mut bytes = 0.0;
        for &seed in &seeds {
            let out = run_experiment(&config, seed).unwrap();
            finals.push(out.logs.last().unwrap().test_acc);
            bytes += out.logs.iter().map(|l| l.bytes_sent as f64).sum::<f64>();
        }
        (finals, bytes)
    };

    let (dpu_acc, dpu_bytes) = run_all(Method::Dpu, 0.1);
    let (rpu_acc, _) = run_all(Method::Rpu, 0.1);
    let (fu_acc, fu_bytes) = run_all(Method::Fu, 1.0);

    let dpu_mean = mean(&dpu_acc);
    let rpu_mean = mean(&rpu_acc);
    let fu_mean = mean(&fu_acc);

    let a_ok = dpu_mean >= rpu_mean + DPU_OVER_RPU_MIN_PP / 100.0;
    let b_ok = (dpu_mean - fu_mean).abs() <= DPU_FU_MAX_GAP_PP / 100.0;
    let ratio = dpu_bytes / fu_bytes;
    let c_ok = ratio <= BYTES_RATIO_MAX;

    let ablation_config = ordering_fixture(Method::Dpu, 0.1);
    let rows: Vec<_> =
        seeds.iter().map(|&s| rewind_ablation(&ablation_config, s).unwrap()).collect();
    let combined = mean(&rows.iter().map(|r| r.loss_combined).collect::<Vec<_>>());
    let global = mean(&rows.iter().map(|r| r.loss_global).collect::<Vec<_>>());
    let local = mean(&rows.iter().map(|r| r.loss_local).collect::<Vec<_>>());
    let random = mean(&rows.iter().map(|r| r.loss_random).collect::<Vec<_>>());
    let d_ok = combined <= random && combined <= global.max(local);

    let elapsed = started.elapsed().as_secs_f64();
    let ok = a_ok && b_ok && c_ok && d_ok && elapsed < 600.0;
    let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
    report(
        6,
        "desk-scale ordering",
        ok,
        &format!(
            "(a) {} dpu {dpu_mean:.4} vs rpu {rpu_mean:.4} needs +{DPU_OVER_RPU_MIN_PP}pp; \
             (b) {} |dpu-fu| = {:.4}; (c) {} bytes ratio {ratio:.4}; \
             (d) {} rewound loss combined {combined:.4} global {global:.4} local {local:.4} \
             random {random:.4}; {elapsed:.0}s",
            mark(a_ok),
            mark(b_ok),
            (dpu_mean - fu_mean).abs(),
            mark(c_ok),
            mark(d_ok)
        ),
    );
}

#[test]
fn criterion_7_sgd_local_identity() {
    let started = Instant::now();
    let arch = Architecture::new(vec![3, 12, 3]).unwrap();
    let train = blobs(3, 3, 30, 0.5, 21);
    let w0 = init_weights(&arch, 5);
    let alpha = 0.05;
    let iters = 40;

    // Manual trajectory: accumulate alpha g^2 per coordinate.
    let mut w = w0.clone();
    let mut expected = vec![0.0; w0.len()];
    for _ in 0..iters {
        let (_, g) = loss_and_gradient(&w, &train).unwrap();
        let mut vals = w.values().to_vec();
        for i in 0..vals.len() {
            expected[i] += alpha * g[i] * g[i];
            vals[i] -= alpha * g[i];
        }
        w = WeightVector::from_values(arch.clone(), vals).unwrap();
    }

    let plan = TrainPlan::new(
        OptimizerKind::Sgd,
        LrSchedule::constant(alpha, iters).unwrap(),
        iters,
    )
    .unwrap();
    let mut trace = TraceState::new(w0.len());
    let mut src = FullBatches::new(train.clone());
    let w_f = full_update_step(&w0, &mut src, &plan, Some(&mut trace)).unwrap();

    let mut max_err: f64 = 0.0;
    let mut nonneg = true;
    for (acc, exp) in trace.accumulator().iter().zip(&expected) {
        max_err = max_err.max((acc - exp).abs());
        nonneg &= *acc >= 0.0;
    }
    let same_endpoint = w_f
        .values()
        .iter()
        .zip(w.values())
        .all(|(a, b)| a.to_bits() == b.to_bits());

    let elapsed = started.elapsed().as_secs_f64();
    let ok = max_err <= LOCAL_IDENTITY_TOL && nonneg && same_endpoint && elapsed < 10.0;
    report(
        7,
        "local contribution identity",
        ok,
        &format!("max |c_local - sum a g^2| = {max_err:.2e}, nonneg {nonneg}, {elapsed:.1}s"),
    );
}

#[test]
fn fixture_accuracy_sanity() {
    // The ordering fixture is meaningful only if the task is learnable but
    // not trivially saturated at round 1; this guards the fixture itself.
    let config = ordering_fixture(Method::Fu, 1.0);
    let out = run_experiment(&config, 1).unwrap();
    let first = out.logs.first().unwrap().test_acc;
    let last = out.logs.last().unwrap().test_acc;
    assert!(last > 0.85, "fixture task unlearnable: final acc {last}");
    assert!(last >= first - 0.02, "accuracy collapsed across rounds");
    let w = init_weights(&config.arch, 1);
    let data = partup::rounds::PreparedData::prepare(&config.stream, 8, 1).unwrap();
    let acc0 = accuracy(&w, data.test()).unwrap();
    assert!(acc0 < 0.9, "untrained network already near ceiling: {acc0}");
}
