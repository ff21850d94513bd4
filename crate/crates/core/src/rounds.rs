//! Multi-round experiment orchestration.
//!
//! Each round the training set grows by a fixed number of samples, the
//! configured method produces a candidate model, and a validation gate
//! decides whether the update is worth transmitting. The server keeps a
//! bit-exact simulation of the edge by decoding its own packets, and all
//! reported accuracies are measured on those edge-side weights.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::codec::{
    apply_packet, encode_packet, Frame, UpdatePacket, ValueWidth, SKIP_FRAME_BYTES,
};
use crate::contribution::{combine, global_contribution, TraceState};
use crate::data::{generate_synthetic, load_idx_pair, ShuffledBatches, SyntheticParams};
use crate::error::{Error, Result};
use crate::exact::exact_sum;
use crate::nn::{accuracy, batch_loss, init_weights, Architecture, Batch, WeightVector};
use crate::optim::{LrSchedule, OptimizerKind};
use crate::seeds::{stream, substream};
use crate::update::{
    dpu_round, full_update_step, gcpu_round, random_mask, rewind, rpu_mask, select_mask,
    sparse_finetune, Mask, PartialUpdateResult, TrainPlan,
};

/// Update method under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dpu,
    Gcpu,
    Rpu,
    Fu,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dpu => "dpu",
            Method::Gcpu => "gcpu",
            Method::Rpu => "rpu",
            Method::Fu => "fu",
        }
    }

    pub fn all() -> [Method; 4] {
        [Method::Dpu, Method::Gcpu, Method::Rpu, Method::Fu]
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "dpu" => Ok(Method::Dpu),
            "gcpu" => Ok(Method::Gcpu),
            "rpu" => Ok(Method::Rpu),
            "fu" => Ok(Method::Fu),
            other => Err(Error::InvalidInput(format!("unknown method {other:?}"))),
        }
    }
}

/// Where the sample pool comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DataSource {
    SyntheticBlobs(SyntheticParams),
    IdxFiles { images: std::path::PathBuf, labels: std::path::PathBuf },
}

/// Growing-dataset layout: a round-1 size, a per-round increment, and a
/// held-out pool split into validation and test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataStream {
    pub d1_size: usize,
    pub delta_size: usize,
    pub holdout: usize,
    pub val_fraction: f64,
    pub source: DataSource,
}

impl DataStream {
    /// Samples the pool must provide for an experiment of `rounds` rounds.
    pub fn required_pool(&self, rounds: usize) -> usize {
        self.d1_size + (rounds - 1) * self.delta_size + self.holdout
    }

    fn validate(&self) -> Result<()> {
        if self.d1_size == 0 || self.delta_size == 0 {
            return Err(Error::InvalidInput("round sizes must be positive".into()));
        }
        if self.holdout < 2 {
            return Err(Error::InvalidInput("holdout needs at least two samples".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "validation fraction {} outside (0, 1)",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// The shuffled pool with frozen train/validation/test regions.
#[derive(Debug, Clone)]
pub struct PreparedData {
    train_pool: Batch,
    val: Batch,
    test: Batch,
    d1_size: usize,
    delta_size: usize,
}

impl PreparedData {
    pub fn prepare(stream_cfg: &DataStream, rounds: usize, master_seed: u64) -> Result<Self> {
        stream_cfg.validate()?;
        if rounds == 0 {
            return Err(Error::InvalidInput("zero rounds".into()));
        }
        let pool = match &stream_cfg.source {
            DataSource::SyntheticBlobs(params) => {
                generate_synthetic(params, substream(master_seed, stream::DATA, 0))?
            }
            DataSource::IdxFiles { images, labels } => load_idx_pair(images, labels)?,
        };
        let required = stream_cfg.required_pool(rounds);
        if pool.n() < required {
            return Err(Error::InvalidInput(format!(
                "pool has {} samples, experiment needs {required}",
                pool.n()
            )));
        }
        let mut order: Vec<usize> = (0..pool.n()).collect();
        {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(substream(
                master_seed,
                stream::SHUFFLE,
                0,
            ));
            order.shuffle(&mut rng);
        }
        let train_total = required - stream_cfg.holdout;
        let train_pool = pool.gather(&order[..train_total]);
        let holdout = &order[train_total..required];
        let val_n = ((stream_cfg.val_fraction * stream_cfg.holdout as f64).round() as usize)
            .clamp(1, stream_cfg.holdout - 1);
        let val = pool.gather(&holdout[..val_n]);
        let test = pool.gather(&holdout[val_n..]);
        Ok(Self {
            train_pool,
            val,
            test,
            d1_size: stream_cfg.d1_size,
            delta_size: stream_cfg.delta_size,
        })
    }

    /// |D^r| = |D^1| + (r - 1) |dD|.
    pub fn size_at_round(&self, round: usize) -> usize {
        self.d1_size + (round - 1) * self.delta_size
    }

    /// The training set visible at round `round` (1-based): a prefix of
    /// the shuffled pool, so earlier rounds' samples are always retained.
    pub fn train_at_round(&self, round: usize) -> Batch {
        self.train_pool.prefix(self.size_at_round(round))
    }

    pub fn val(&self) -> &Batch {
        &self.val
    }

    pub fn test(&self) -> &Batch {
        &self.test
    }
}

/// Step-decay learning rate settings, with the interval given in epochs
/// (0 disables decay).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LrConfig {
    pub initial: f64,
    pub decay_factor: f64,
    pub decay_epochs: usize,
}

impl LrConfig {
    fn schedule(&self, batches_per_epoch: usize, iterations: usize, stretch: usize) -> Result<LrSchedule> {
        if self.decay_epochs == 0 {
            LrSchedule::constant(self.initial, iterations)
        } else {
            LrSchedule::stepped(
                self.initial,
                self.decay_factor,
                self.decay_epochs * batches_per_epoch * stretch,
                iterations,
            )
        }
    }
}

/// Everything one experiment run needs besides its seed.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub arch: Architecture,
    pub method: Method,
    pub k: f64,
    pub rounds: usize,
    pub optimizer: OptimizerKind,
    pub lr: LrConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub width: ValueWidth,
    pub sample_bits: u64,
    pub n_nodes: usize,
    pub always_send: bool,
    pub stream: DataStream,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidInput("zero rounds".into()));
        }
        if !(self.k > 0.0 && self.k <= 1.0) {
            return Err(Error::InvalidInput(format!("update ratio {} outside (0, 1]", self.k)));
        }
        if self.method == Method::Fu && self.k != 1.0 {
            return Err(Error::InvalidInput("full updating requires k = 1".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput("epochs and batch size must be positive".into()));
        }
        if self.n_nodes == 0 || self.sample_bits == 0 {
            return Err(Error::InvalidInput("fleet parameters must be positive".into()));
        }
        self.stream.validate()
    }

    /// Training plan for a round over `n_train` samples. Methods without a
    /// separate fine-tune step stretch to the same 2Q total budget, decay
    /// interval included.
    fn plan_for(&self, n_train: usize, stretch: bool) -> Result<TrainPlan> {
        let batches_per_epoch = n_train.div_ceil(self.batch_size);
        let q = self.epochs * batches_per_epoch;
        let factor = if stretch { 2 } else { 1 };
        let schedule = self.lr.schedule(batches_per_epoch, q * factor, factor)?;
        TrainPlan::new(self.optimizer, schedule, q * factor)
    }
}

/// Per-round metrics. Accuracies refer to the deployed edge model after
/// the round's gate decision.
#[derive(Debug, Clone, Serialize)]
pub struct RoundLog {
    pub round: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub bytes_sent: usize,
    pub reinit: bool,
    pub skipped: bool,
    pub mask_cardinality: usize,
    pub new_samples: usize,
    pub wall_time_s: f64,
}

/// True when the dataset has more than doubled since the last fresh start.
pub fn reinit_due(current_size: usize, last_reinit_size: usize) -> bool {
    current_size > 2 * last_reinit_size
}

/// Strict improvement gate: ties keep the deployed model.
pub fn accept_update(val_acc_candidate: f64, val_acc_deployed: f64) -> bool {
    val_acc_candidate > val_acc_deployed
}

/// One method/seed run in progress.
pub struct Experiment {
    config: ExperimentConfig,
    master_seed: u64,
    init_seed: u64,
    data: PreparedData,
    server: WeightVector,
    edge: WeightVector,
    edge_val_acc: f64,
    last_reinit_size: usize,
    completed: usize,
    packets: Vec<Vec<u8>>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, master_seed: u64) -> Result<Self> {
        config.validate()?;
        let data = PreparedData::prepare(&config.stream, config.rounds, master_seed)?;
        let init_seed = substream(master_seed, stream::INIT, 0);
        let w0 = init_weights(&config.arch, init_seed);
        let edge_val_acc = accuracy(&w0, data.val())?;
        let last_reinit_size = data.d1_size;
        Ok(Self {
            config,
            master_seed,
            init_seed,
            data,
            server: w0.clone(),
            edge: w0,
            edge_val_acc,
            last_reinit_size,
            completed: 0,
            packets: Vec::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn data(&self) -> &PreparedData {
        &self.data
    }

    /// Server-side deployed weights (full precision).
    pub fn server_weights(&self) -> &WeightVector {
        &self.server
    }

    /// Edge-side weights, reconstructed from the actual packet bytes.
    pub fn edge_weights(&self) -> &WeightVector {
        &self.edge
    }

    /// Encoded bytes of every frame sent so far, one per completed round.
    pub fn packets(&self) -> &[Vec<u8>] {
        &self.packets
    }

    fn candidate_frame(
        &self,
        result: &PartialUpdateResult,
        reinit: bool,
    ) -> Frame {
        let values: Vec<f64> =
            result.mask.ones().map(|i| result.w_new.values()[i]).collect();
        if reinit {
            Frame::ReinitSparse {
                width: self.config.width,
                seed: self.init_seed,
                mask: result.mask.clone(),
                values,
            }
        } else {
            Frame::Sparse { width: self.config.width, mask: result.mask.clone(), values }
        }
    }

    /// Runs the next round and returns its log.
    pub fn step(&mut self) -> Result<RoundLog> {
        let started = Instant::now();
        let round = self.completed + 1;
        if round > self.config.rounds {
            return Err(Error::InvalidInput(format!(
                "experiment already ran its {} rounds",
                self.config.rounds
            )));
        }
        let train = self.data.train_at_round(round);
        let n = train.n();
        let mut batches = ShuffledBatches::new(
            train.clone(),
            self.config.batch_size,
            substream(self.master_seed, stream::SHUFFLE, round as u64),
        )?;

        let mut reinit = false;
        let (candidate, train_loss, mask_cardinality, frame) = match self.config.method {
            Method::Dpu => {
                reinit = reinit_due(n, self.last_reinit_size);
                let start = if reinit {
                    init_weights(&self.config.arch, self.init_seed)
                } else {
                    self.server.clone()
                };
                if reinit {
                    self.last_reinit_size = n;
                }
                let plan = self.config.plan_for(n, false)?;
                let result = dpu_round(&start, &mut batches, &train, self.config.k, &plan)?;
                let frame = self.candidate_frame(&result, reinit);
                (result.w_new.clone(), result.train_loss_final, result.mask.cardinality(), frame)
            }
            Method::Gcpu => {
                let plan = self.config.plan_for(n, false)?;
                let result =
                    gcpu_round(&self.server, &mut batches, &train, self.config.k, &plan)?;
                let frame = self.candidate_frame(&result, false);
                (result.w_new.clone(), result.train_loss_final, result.mask.cardinality(), frame)
            }
            Method::Rpu => {
                let plan = self.config.plan_for(n, true)?;
                let mask = rpu_mask(
                    &self.config.arch,
                    self.config.k,
                    substream(self.master_seed, stream::RPU_MASK, round as u64),
                )?;
                let start_loss = batch_loss(&self.server, &train)?;
                let result = sparse_finetune(
                    &self.server,
                    &self.server.clone(),
                    mask,
                    &mut batches,
                    &train,
                    &plan,
                    start_loss,
                )?;
                let frame = self.candidate_frame(&result, false);
                (result.w_new.clone(), result.train_loss_final, result.mask.cardinality(), frame)
            }
            Method::Fu => {
                let plan = self.config.plan_for(n, true)?;
                let start = init_weights(&self.config.arch, self.init_seed);
                let w_new = full_update_step(&start, &mut batches, &plan, None)?;
                let loss = batch_loss(&w_new, &train)?;
                let frame =
                    Frame::Full { width: self.config.width, values: w_new.values().to_vec() };
                (w_new, loss, self.config.arch.weight_count(), frame)
            }
        };

        // Simulate the edge side of the candidate from the real bytes.
        let packet = UpdatePacket::new(round as u32, self.config.arch.weight_count() as u32, frame);
        let bytes = encode_packet(&packet)?;
        let decoded = crate::codec::decode_packet(&bytes)?;
        let edge_candidate = apply_packet(&self.edge, &decoded)?;
        let candidate_val_acc = accuracy(&edge_candidate, self.data.val())?;

        let gated = self.config.method != Method::Fu && !self.config.always_send;
        let send = !gated || accept_update(candidate_val_acc, self.edge_val_acc);
        let (bytes_sent, skipped) = if send {
            self.server = candidate;
            self.edge = edge_candidate;
            self.edge_val_acc = candidate_val_acc;
            let len = bytes.len();
            self.packets.push(bytes);
            (len, false)
        } else {
            let skip = encode_packet(&UpdatePacket::skip(
                round as u32,
                self.config.arch.weight_count() as u32,
            ))?;
            debug_assert_eq!(skip.len(), SKIP_FRAME_BYTES);
            let len = skip.len();
            self.packets.push(skip);
            (len, true)
        };

        let val_acc = self.edge_val_acc;
        let test_acc = accuracy(&self.edge, self.data.test())?;
        self.completed = round;
        Ok(RoundLog {
            round,
            train_loss,
            val_acc,
            test_acc,
            bytes_sent,
            reinit,
            skipped,
            mask_cardinality,
            new_samples: if round == 1 { self.data.d1_size } else { self.data.delta_size },
            wall_time_s: started.elapsed().as_secs_f64(),
        })
    }

    /// Runs every remaining round.
    pub fn run(&mut self) -> Result<Vec<RoundLog>> {
        let mut logs = Vec::with_capacity(self.config.rounds - self.completed);
        while self.completed < self.config.rounds {
            logs.push(self.step()?);
        }
        Ok(logs)
    }
}

/// Result bundle of a full run.
pub struct RunOutput {
    pub method: Method,
    pub seed: u64,
    pub logs: Vec<RoundLog>,
    pub packets: Vec<Vec<u8>>,
}

/// Runs one method/seed cell to completion.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let mut exp = Experiment::new(config.clone(), seed)?;
    let logs = exp.run()?;
    Ok(RunOutput { method: config.method, seed, logs, packets: exp.packets })
}

/// Rewound-model loss under different mask strategies, for one seed.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub seed: u64,
    pub loss_deployed: f64,
    pub loss_full: f64,
    pub loss_combined: f64,
    pub loss_global: f64,
    pub loss_local: f64,
    pub loss_random: f64,
}

/// One-round rewind ablation: trains a base model on the round-1 data,
/// runs the round-2 full update with a contribution trace, then measures
/// the loss of the rewound model under combined, global-only, local-only,
/// and uniform-random masks of the same cardinality.
pub fn rewind_ablation(config: &ExperimentConfig, seed: u64) -> Result<AblationRow> {
    config.validate()?;
    let rounds = config.rounds.max(2);
    let data = PreparedData::prepare(&config.stream, rounds, seed)?;
    let w0 = init_weights(&config.arch, substream(seed, stream::INIT, 0));

    let d1 = data.train_at_round(1);
    let mut b1 = ShuffledBatches::new(
        d1.clone(),
        config.batch_size,
        substream(seed, stream::SHUFFLE, 1),
    )?;
    let base = full_update_step(&w0, &mut b1, &config.plan_for(d1.n(), false)?, None)?;

    let d2 = data.train_at_round(2);
    let mut b2 = ShuffledBatches::new(
        d2.clone(),
        config.batch_size,
        substream(seed, stream::SHUFFLE, 2),
    )?;
    let mut trace = TraceState::new(base.len());
    let w_f = full_update_step(&base, &mut b2, &config.plan_for(d2.n(), false)?, Some(&mut trace))?;

    let c_g = global_contribution(&base, &w_f)?;
    let c_l = trace.into_local()?;
    let c = combine(&c_g, &c_l)?;
    let loss_for = |mask: &Mask| batch_loss(&rewind(&base, &w_f, mask)?, &d2);
    let random = random_mask(base.len(), config.k, substream(seed, stream::ABLATE_RANDOM, 0))?;
    Ok(AblationRow {
        seed,
        loss_deployed: batch_loss(&base, &d2)?,
        loss_full: batch_loss(&w_f, &d2)?,
        loss_combined: loss_for(&select_mask(&c, config.k)?)?,
        loss_global: loss_for(&select_mask(&c_g, config.k)?)?,
        loss_local: loss_for(&select_mask(&c_l, config.k)?)?,
        loss_random: loss_for(&random)?,
    })
}

/// Refuses to clobber existing output unless forced.
pub fn ensure_fresh(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::OutputExists(path.display().to_string()));
    }
    Ok(())
}

/// Writes the per-round log CSV. Booleans are 0/1.
pub fn write_round_csv(path: &Path, logs: &[RoundLog]) -> Result<()> {
    let err = |e| Error::io(path.display().to_string(), e);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(err)?);
    let write = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(out, "round,train_loss,val_acc,test_acc,bytes_sent,reinit,skipped")?;
        for log in logs {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                log.round,
                log.train_loss,
                log.val_acc,
                log.test_acc,
                log.bytes_sent,
                log.reinit as u8,
                log.skipped as u8
            )?;
        }
        Ok(())
    };
    write(&mut out).map_err(err)?;
    out.flush().map_err(err)
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = exact_sum(values.iter().copied()) / n;
    let var = exact_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
    (mean, var.sqrt())
}
