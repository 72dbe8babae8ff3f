use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, Dataset, DenseLayer, Model};
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dims: vec![64],
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            rng_seed: 0,
        }
    }
}

/// Per-layer gradients of the mean cross-entropy loss, in the same layout as
/// the layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &Model) -> Self {
        Gradients {
            weights: model.layers().iter().map(|l| vec![0.0; l.weight_count()]).collect(),
            bias: model.layers().iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        }
    }
}

/// Mean softmax cross-entropy over `batch` and its gradient. The pass runs in
/// `f64` on a widened copy of the `f32` parameters.
pub fn backprop(model: &Model, data: &Dataset, batch: &[usize]) -> Result<(f64, Gradients)> {
    if data.dim() != model.input_dim() {
        return Err(Error::dim("dataset feature dimension", model.input_dim(), data.dim()));
    }
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let classes = model.num_classes();
    let mut grads = Gradients::zeros_like(model);
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    let layers = model.layers();

    for &i in batch {
        let label = data.labels()[i] as usize;
        if label >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} exceeds model output size {classes}"
            )));
        }
        // activations[0] is the input; activations[l + 1] is layer l's output.
        let mut activations: Vec<Vec<f64>> = vec![data.row(i).iter().map(|&x| f64::from(x)).collect()];
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
        for layer in layers {
            let input = activations.last().expect("non-empty");
            let z: Vec<f64> = layer
                .weights()
                .chunks_exact(layer.in_dim())
                .zip(layer.bias())
                .map(|(row, &b)| {
                    row.iter()
                        .zip(input)
                        .fold(f64::from(b), |acc, (&w, &x)| acc + f64::from(w) * x)
                })
                .collect();
            let a = z
                .iter()
                .map(|&v| match layer.activation() {
                    Activation::Relu => v.max(0.0),
                    Activation::None => v,
                })
                .collect();
            pre.push(z);
            activations.push(a);
        }

        let logits = activations.last().expect("non-empty");
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += (sum.ln() - (logits[label] - max)) * scale;

        // dL/dz for the output layer.
        let mut delta: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        delta[label] -= 1.0;

        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            if layer.activation() == Activation::Relu {
                for (d, &z) in delta.iter_mut().zip(&pre[l]) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &activations[l];
            let gw = &mut grads.weights[l];
            for (o, &d) in delta.iter().enumerate() {
                grads.bias[l][o] += d * scale;
                let row = &mut gw[o * layer.in_dim()..(o + 1) * layer.in_dim()];
                for (g, &x) in row.iter_mut().zip(input) {
                    *g += d * x * scale;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; layer.in_dim()];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &layer.weights()[o * layer.in_dim()..(o + 1) * layer.in_dim()];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += f64::from(w) * d;
                    }
                }
                delta = prev;
            }
        }
    }
    Ok((loss, grads))
}

fn init_layer<R: Rng>(rng: &mut R, in_dim: usize, out_dim: usize, activation: Activation) -> Result<DenseLayer> {
    let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
    let weights = (0..in_dim * out_dim)
        .map(|_| rng.gen_range(-limit..=limit) as f32)
        .collect();
    DenseLayer::new(in_dim, out_dim, weights, vec![0.0; out_dim], activation)
}

/// Train an MLP with ReLU hidden layers and a linear output layer using
/// mini-batch SGD on softmax cross-entropy. `epochs = 0` returns the freshly
/// initialised network.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<Model> {
    if config.hidden_dims.contains(&0) {
        return Err(Error::Config("hidden layer widths must be positive".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(Error::Config("learning_rate must be positive and finite".into()));
    }
    if data.num_classes() < 2 {
        return Err(Error::Config("training needs at least two classes".into()));
    }

    let mut rng = seeded(config.rng_seed);
    let mut dims = vec![data.dim()];
    dims.extend(&config.hidden_dims);
    dims.push(data.num_classes());
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 2 == dims.len() {
                Activation::None
            } else {
                Activation::Relu
            };
            init_layer(&mut rng, w[0], w[1], act)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = Model::new(layers)?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let lr = config.learning_rate;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let (_, grads) = backprop(&model, data, batch)?;
            for (l, layer) in model.layers.iter_mut().enumerate() {
                for (w, g) in layer.weights.iter_mut().zip(&grads.weights[l]) {
                    *w = (f64::from(*w) - lr * g) as f32;
                }
                for (b, g) in layer.bias.iter_mut().zip(&grads.bias[l]) {
                    *b = (f64::from(*b) - lr * g) as f32;
                }
            }
        }
    }
    Ok(model)
}
