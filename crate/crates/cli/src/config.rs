//! The TOML experiment manifest.
//!
//! ```toml
//! version = 1
//!
//! [model]
//! layers = [2, 32, 32, 3]
//!
//! [data]
//! source = "synthetic"   # or "idx" with images/labels paths
//! classes = 3
//! dims = 2
//! sigma = 0.3
//! pool = 0               # 0 = exactly what the run needs
//! d1 = 200
//! delta = 200
//! holdout = 1500
//! val_fraction = 0.3
//!
//! [train]
//! k = 0.1
//! rounds = 8
//! optimizer = "adam"     # sgd | nesterov | adam
//! lr = 0.005
//! lr_decay = 0.1
//! lr_decay_epochs = 10
//! epochs = 30
//! batch = 128
//! always_send = false
//!
//! [comm]
//! value_bits = 32        # 32 | 64
//! sample_bits = 544
//! nodes = 10
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use partup::data::SyntheticParams;
use partup::{
    Architecture, DataSource, DataStream, ExperimentConfig, LrConfig, Method, OptimizerKind,
    ValueWidth,
};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub model: ModelSection,
    pub data: DataSection,
    pub train: TrainSection,
    pub comm: CommSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub layers: Vec<usize>,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Synthetic,
    Idx,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: SourceKind,
    #[serde(default)]
    pub classes: usize,
    #[serde(default)]
    pub dims: usize,
    #[serde(default)]
    pub sigma: f64,
    /// Synthetic pool size; 0 draws exactly what the run needs.
    #[serde(default)]
    pub pool: usize,
    pub d1: usize,
    pub delta: usize,
    pub holdout: usize,
    pub val_fraction: f64,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Sgd,
    Nesterov,
    Adam,
}

fn default_momentum() -> f64 {
    0.9
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub k: f64,
    pub rounds: usize,
    pub optimizer: OptimizerName,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub lr: f64,
    #[serde(default)]
    pub lr_decay: f64,
    #[serde(default)]
    pub lr_decay_epochs: usize,
    pub epochs: usize,
    pub batch: usize,
    /// Disables the validation gate; every candidate ships.
    #[serde(default)]
    pub always_send: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommSection {
    pub value_bits: u8,
    pub sample_bits: u64,
    pub nodes: usize,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let manifest: Manifest = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        if manifest.version != MANIFEST_VERSION {
            bail!(
                "config {} has version {}, this build reads version {MANIFEST_VERSION}",
                path.display(),
                manifest.version
            );
        }
        Ok(manifest)
    }

    /// The run configuration for one method cell. Full updating always
    /// ships everything, so its ratio is pinned to 1.
    pub fn experiment(&self, method: Method) -> Result<ExperimentConfig> {
        let arch = Architecture::new(self.model.layers.clone())?;
        let source = match self.data.source {
            SourceKind::Synthetic => {
                let needed = self.data.d1
                    + self.train.rounds.saturating_sub(1) * self.data.delta
                    + self.data.holdout;
                DataSource::SyntheticBlobs(SyntheticParams {
                    classes: self.data.classes,
                    dims: self.data.dims,
                    sigma: self.data.sigma,
                    count: if self.data.pool == 0 { needed } else { self.data.pool },
                })
            }
            SourceKind::Idx => {
                let (Some(images), Some(labels)) = (&self.data.images, &self.data.labels) else {
                    bail!("idx source needs both images and labels paths");
                };
                DataSource::IdxFiles { images: images.clone(), labels: labels.clone() }
            }
        };
        let optimizer = match self.train.optimizer {
            OptimizerName::Sgd => OptimizerKind::Sgd,
            OptimizerName::Nesterov => OptimizerKind::NesterovSgd { momentum: self.train.momentum },
            OptimizerName::Adam => OptimizerKind::adam_default(),
        };
        let width = match self.comm.value_bits {
            32 => ValueWidth::W32,
            64 => ValueWidth::W64,
            other => bail!("value_bits {other} unsupported; use 32 or 64"),
        };
        Ok(ExperimentConfig {
            arch,
            method,
            k: if method == Method::Fu { 1.0 } else { self.train.k },
            rounds: self.train.rounds,
            optimizer,
            lr: LrConfig {
                initial: self.train.lr,
                decay_factor: self.train.lr_decay,
                decay_epochs: self.train.lr_decay_epochs,
            },
            epochs: self.train.epochs,
            batch_size: self.train.batch,
            width,
            sample_bits: self.comm.sample_bits,
            n_nodes: self.comm.nodes,
            always_send: self.train.always_send,
            stream: DataStream {
                d1_size: self.data.d1,
                delta_size: self.data.delta,
                holdout: self.data.holdout,
                val_fraction: self.data.val_fraction,
                source,
            },
        })
    }
}
