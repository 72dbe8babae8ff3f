//! Dense feed-forward networks: the weights these networks carry are what
//! the binding layer protects.
//!
//! Weights are `f32` stored row-major with shape `(out_dim, in_dim)`. Any bit
//! pattern is a legal weight: encrypted layers routinely contain NaN and
//! infinities and inference must run through them without complaint.

mod data;
mod format;
mod idx;
mod train;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use data::{gen_synthetic, Dataset};
pub use format::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use idx::{load_idx, read_idx, write_idx_f32, write_idx_labels, IDX_F32_MATRIX, IDX_U8_IMAGES, IDX_U8_LABELS};
pub use train::{backprop, train, Gradients, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    None,
    Relu,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::None => 0,
            Activation::Relu => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::None),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::None => x,
            // NaN falls through unchanged.
            Activation::Relu => {
                if x < 0.0 {
                    0.0
                } else {
                    x
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!(
                "layer dimensions must be positive, got {in_dim}x{out_dim}"
            )));
        }
        let expected = in_dim
            .checked_mul(out_dim)
            .ok_or_else(|| Error::Config("layer is too large".into()))?;
        if weights.len() != expected {
            return Err(Error::dim("weight count", expected, weights.len()));
        }
        if bias.len() != out_dim {
            return Err(Error::dim("bias length", out_dim, bias.len()));
        }
        Ok(DenseLayer {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Result<Self> {
        Self::new(
            in_dim,
            out_dim,
            vec![0.0; in_dim * out_dim],
            vec![0.0; out_dim],
            activation,
        )
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f32] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f32] {
        &mut self.bias
    }

    pub fn weight_count(&self) -> usize {
        self.weights.len()
    }

    /// Affine map plus activation into `out`.
    pub fn forward_into(&self, input: &[f32], out: &mut Vec<f32>) {
        debug_assert_eq!(input.len(), self.in_dim);
        out.clear();
        out.extend(self.weights.chunks_exact(self.in_dim).zip(&self.bias).map(|(row, &b)| {
            let z = row.iter().zip(input).fold(b, |acc, (w, x)| acc + w * x);
            self.activation.apply(z)
        }));
    }

    /// Bit-level equality, so NaN payloads compare as the same weight.
    pub fn bit_eq(&self, other: &DenseLayer) -> bool {
        self.in_dim == other.in_dim
            && self.out_dim == other.out_dim
            && self.activation == other.activation
            && bits_eq(&self.weights, &other.weights)
            && bits_eq(&self.bias, &other.bias)
    }
}

fn bits_eq(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[derive(Debug, Clone)]
pub struct Model {
    layers: Vec<DenseLayer>,
}

impl Model {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a model needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Config(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Model { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layer(&self, id: usize) -> Result<&DenseLayer> {
        self.layers.get(id).ok_or_else(|| self.bad_layer(id))
    }

    pub fn layer_mut(&mut self, id: usize) -> Result<&mut DenseLayer> {
        let err = self.bad_layer(id);
        self.layers.get_mut(id).ok_or(err)
    }

    fn bad_layer(&self, id: usize) -> Error {
        Error::InvalidArgument(format!(
            "layer {id} does not exist (model has {} layers)",
            self.layers.len()
        ))
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn bit_eq(&self, other: &Model) -> bool {
        self.layers.len() == other.layers.len() && self.layers.iter().zip(&other.layers).all(|(a, b)| a.bit_eq(b))
    }

    pub fn forward(&self, input: &[f32]) -> Result<Vec<f32>> {
        if input.len() != self.input_dim() {
            return Err(Error::dim("input length", self.input_dim(), input.len()));
        }
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn predict(&self, input: &[f32]) -> Result<usize> {
        Ok(argmax(&self.forward(input)?))
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<Accuracy> {
        if data.dim() != self.input_dim() {
            return Err(Error::dim("dataset feature dimension", self.input_dim(), data.dim()));
        }
        let mut correct = 0;
        for (x, &y) in data.rows().zip(data.labels()) {
            if self.predict(x)? == y as usize {
                correct += 1;
            }
        }
        Accuracy::new(correct, data.len())
    }
}

/// Index of the largest logit. NaN ranks below every number, ties go to the
/// lowest index, and an all-NaN vector yields 0.
pub fn argmax(logits: &[f32]) -> usize {
    let mut best = 0;
    for i in 1..logits.len() {
        if rank(logits[i], logits[best]) == Ordering::Greater {
            best = i;
        }
    }
    best
}

fn rank(a: f32, b: f32) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (false, false) => a.partial_cmp(&b).unwrap_or(Ordering::Equal),
    }
}

/// Exact classification accuracy `correct / total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn new(correct: usize, total: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::InvalidArgument(
                "accuracy of an empty dataset is undefined".into(),
            ));
        }
        if correct > total {
            return Err(Error::InvalidArgument(format!("{correct} correct out of {total}")));
        }
        Ok(Accuracy { correct, total })
    }

    pub fn value(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

impl std::fmt::Display for Accuracy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}",
            crate::harness::format_ratio(self.correct as u128, self.total as u128, 4)
        )
    }
}
