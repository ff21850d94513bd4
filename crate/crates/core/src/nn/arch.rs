//! Network architecture: layer widths and the flat weight layout.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// A fully connected multilayer perceptron shape.
///
/// `layers` lists the input width, hidden widths, and class count. Hidden
/// activations are ReLU; the final layer produces logits consumed by a
/// softmax cross-entropy head. All parameters live in one flat vector with
/// a fixed layout: affine layers in order, each storing its weight matrix
/// row-major (output-major) followed by its bias vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    layers: Vec<usize>,
}

impl Architecture {
    /// Builds an architecture from layer widths.
    ///
    /// Requires at least an input and an output layer, every width >= 1.
    pub fn new(layers: Vec<usize>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "architecture needs at least 2 layers, got {}",
                layers.len()
            )));
        }
        if let Some(zero) = layers.iter().position(|&n| n == 0) {
            return Err(Error::InvalidInput(format!("layer {zero} has width 0")));
        }
        Ok(Self { layers })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    /// Number of output classes (width of the final layer).
    pub fn classes(&self) -> usize {
        *self.layers.last().unwrap()
    }

    /// Number of affine layers.
    pub fn affine_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn fan_in(&self, layer: usize) -> usize {
        self.layers[layer]
    }

    pub fn fan_out(&self, layer: usize) -> usize {
        self.layers[layer + 1]
    }

    /// Total parameter count: sum over layers of (fan_in + 1) * fan_out.
    pub fn weight_count(&self) -> usize {
        self.layers
            .windows(2)
            .map(|pair| (pair[0] + 1) * pair[1])
            .sum()
    }

    /// Flat index range holding layer `l` (weights then biases).
    pub fn layer_range(&self, layer: usize) -> Range<usize> {
        debug_assert!(layer < self.affine_layers());
        let start: usize = self.layers[..=layer]
            .windows(2)
            .map(|pair| (pair[0] + 1) * pair[1])
            .sum();
        let len = (self.fan_in(layer) + 1) * self.fan_out(layer);
        start..start + len
    }

    /// Flat index of the first weight of layer `l`; biases start after the
    /// fan_in * fan_out weight block.
    pub fn bias_offset(&self, layer: usize) -> usize {
        self.layer_range(layer).start + self.fan_in(layer) * self.fan_out(layer)
    }

    /// Widest layer, used to size scratch buffers.
    pub fn max_width(&self) -> usize {
        *self.layers.iter().max().unwrap()
    }
}
