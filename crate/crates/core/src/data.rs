//! Sample pools: synthetic Gaussian blobs, IDX file loading, and minibatch
//! streaming.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Batch, BatchSource};

/// Parameters for the stratified Gaussian blob generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub classes: usize,
    pub dims: usize,
    pub sigma: f64,
    pub count: usize,
}

impl SyntheticParams {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidInput(format!("{} classes, need at least 2", self.classes)));
        }
        if self.dims == 0 {
            return Err(Error::InvalidInput("zero input dimensions".into()));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!("noise sigma {} invalid", self.sigma)));
        }
        if self.count == 0 {
            return Err(Error::InvalidInput("zero sample count".into()));
        }
        Ok(())
    }
}

/// Class mean for the blob arrangement: means sit evenly spaced on a
/// circle in the first two dimensions (on a line when dims == 1), scaled
/// so adjacent means are unit distance apart. Sigma is therefore noise
/// relative to a fixed class separation of 1, independent of the class
/// count. Remaining dimensions are zero.
fn class_mean(class: usize, classes: usize, dims: usize, out: &mut [f64]) {
    out.fill(0.0);
    if dims == 1 {
        out[0] = class as f64 - (classes - 1) as f64 / 2.0;
    } else if classes > 1 {
        let theta = 2.0 * std::f64::consts::PI * class as f64 / classes as f64;
        let radius = 0.5 / (std::f64::consts::PI / classes as f64).sin();
        out[0] = radius * theta.cos();
        out[1] = radius * theta.sin();
    }
}

/// Gaussian blobs, one per class, classes assigned round-robin so every
/// class count is exact (remainders go to the lowest class indices).
pub fn generate_synthetic(params: &SyntheticParams, seed: u64) -> Result<Batch> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(params.count * params.dims);
    let mut labels = Vec::with_capacity(params.count);
    let mut mean = vec![0.0; params.dims];
    for i in 0..params.count {
        let class = i % params.classes;
        class_mean(class, params.classes, params.dims, &mut mean);
        for &m in &mean {
            let noise: f64 = rng.sample(StandardNormal);
            inputs.push(m + params.sigma * noise);
        }
        labels.push(class as u32);
    }
    Batch::new(inputs, params.dims, labels)
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedData { path: path.display().to_string(), reason: reason.into() }
}

fn read_be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    let end = at + 4;
    if bytes.len() < end {
        return Err(malformed(path, "truncated header"));
    }
    Ok(u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]))
}

/// Loads an IDX image file (big-endian magic 0x00000803, dims n x rows x
/// cols, one unsigned byte per pixel). Pixels scale to [0, 1].
pub fn load_idx_images(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let magic = read_be_u32(&bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(malformed(path, format!("image magic {magic:#010x}")));
    }
    let n = read_be_u32(&bytes, 4, path)? as usize;
    let rows = read_be_u32(&bytes, 8, path)? as usize;
    let cols = read_be_u32(&bytes, 12, path)? as usize;
    let dim = rows
        .checked_mul(cols)
        .ok_or_else(|| malformed(path, "image size overflows"))?;
    if n == 0 || dim == 0 {
        return Err(malformed(path, "empty image set"));
    }
    let expect = 16 + n.checked_mul(dim).ok_or_else(|| malformed(path, "payload overflows"))?;
    if bytes.len() != expect {
        return Err(malformed(path, format!("{} bytes, expected {expect}", bytes.len())));
    }
    let inputs = bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    Ok((inputs, dim, n))
}

/// Loads an IDX label file (big-endian magic 0x00000801, one unsigned byte
/// per label).
pub fn load_idx_labels(path: &Path) -> Result<Vec<u32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let magic = read_be_u32(&bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(malformed(path, format!("label magic {magic:#010x}")));
    }
    let n = read_be_u32(&bytes, 4, path)? as usize;
    if bytes.len() != 8 + n {
        return Err(malformed(path, format!("{} bytes, expected {}", bytes.len(), 8 + n)));
    }
    Ok(bytes[8..].iter().map(|&b| b as u32).collect())
}

/// Loads a matching image/label IDX pair into a batch.
pub fn load_idx_pair(images: &Path, labels: &Path) -> Result<Batch> {
    let (inputs, dim, n) = load_idx_images(images)?;
    let y = load_idx_labels(labels)?;
    if y.len() != n {
        return Err(malformed(labels, format!("{} labels for {n} images", y.len())));
    }
    Batch::new(inputs, dim, y)
}

/// Epoch-shuffled minibatch stream: each epoch visits every sample exactly
/// once in a fresh random order, with a short final batch when the batch
/// size does not divide the pool.
pub struct ShuffledBatches {
    data: Batch,
    batch_size: usize,
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
    current: Option<Batch>,
}

impl ShuffledBatches {
    pub fn new(data: Batch, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidInput("zero batch size".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..data.n()).collect();
        order.shuffle(&mut rng);
        Ok(Self { data, batch_size, order, pos: 0, rng, current: None })
    }

    /// Batches served per epoch: ceil(n / batch_size).
    pub fn batches_per_epoch(&self) -> usize {
        self.data.n().div_ceil(self.batch_size)
    }
}

impl BatchSource for ShuffledBatches {
    fn next_batch(&mut self) -> &Batch {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let rows = &self.order[self.pos..end];
        self.pos = end;
        self.current = Some(self.data.gather(rows));
        self.current.as_ref().unwrap()
    }
}
