//! Helpers shared by the integration tests.
#![allow(dead_code)]

use puflock::model::{backprop, Activation, Dataset, DenseLayer, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-3;

/// Parameters widened to f64: (weights, bias, relu) per layer.
type Params = Vec<(Vec<f64>, Vec<f64>, bool)>;

/// Mean softmax cross-entropy, plus the smallest |z| seen at a ReLU input.
fn loss_and_margin(params: &Params, dims: &[usize], data: &Dataset) -> (f64, f64) {
    let mut total = 0.0;
    let mut margin = f64::INFINITY;
    for (x, &y) in data.rows().zip(data.labels()) {
        let mut a: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        for (l, (w, b, relu)) in params.iter().enumerate() {
            let (i, o) = (dims[l], dims[l + 1]);
            a = (0..o)
                .map(|r| {
                    let z = b[r] + (0..i).map(|c| w[r * i + c] * a[c]).sum::<f64>();
                    if *relu {
                        margin = margin.min(z.abs());
                    }
                    if *relu && z < 0.0 {
                        0.0
                    } else {
                        z
                    }
                })
                .collect();
        }
        let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + a.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        total += lse - a[y as usize];
    }
    (total / data.len() as f64, margin)
}

fn loss(params: &Params, dims: &[usize], data: &Dataset) -> f64 {
    loss_and_margin(params, dims, data).0
}

fn widen(model: &Model) -> Params {
    model
        .layers()
        .iter()
        .map(|l| {
            (
                l.weights().iter().map(|&w| f64::from(w)).collect(),
                l.bias().iter().map(|&b| f64::from(b)).collect(),
                l.activation() == Activation::Relu,
            )
        })
        .collect()
}

/// A random 4-6-3 network with five samples. Draws are repeated until no
/// ReLU input lies within 10h of its kink, where central differences are
/// meaningless.
fn instance(seed: u64) -> (Model, Dataset, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let (model, data, dims) = draw(&mut rng);
        if loss_and_margin(&widen(&model), &dims, &data).1 > 10.0 * H {
            return (model, data, dims);
        }
    }
}

fn draw(rng: &mut ChaCha8Rng) -> (Model, Dataset, Vec<usize>) {
    let dims = vec![4, 6, 3];
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(l, d)| {
            let w = (0..d[0] * d[1]).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            let b = (0..d[1]).map(|_| rng.gen_range(-0.5f32..0.5)).collect();
            let act = if l == 0 { Activation::Relu } else { Activation::None };
            DenseLayer::new(d[0], d[1], w, b, act).unwrap()
        })
        .collect();
    let features = (0..5 * 4).map(|_| rng.gen_range(-2.0f32..2.0)).collect();
    let labels = (0..5).map(|_| rng.gen_range(0..3)).collect();
    (
        Model::new(layers).unwrap(),
        Dataset::new(features, labels, 4, 3).unwrap(),
        dims,
    )
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Worst relative error between analytic and numeric gradients, over every
/// parameter tensor of one random instance.
pub fn max_relative_error(seed: u64) -> f64 {
    let (model, data, dims) = instance(seed);
    let all: Vec<usize> = (0..data.len()).collect();
    let (analytic_loss, grads) = backprop(&model, &data, &all).unwrap();
    let params = widen(&model);
    assert!((loss(&params, &dims, &data) - analytic_loss).abs() < 1e-12);

    let mut worst: f64 = 0.0;
    for l in 0..params.len() {
        for which in 0..2 {
            let len = if which == 0 {
                params[l].0.len()
            } else {
                params[l].1.len()
            };
            let numeric: Vec<f64> = (0..len)
                .map(|i| {
                    let bump = |delta: f64| {
                        let mut p = params.clone();
                        if which == 0 {
                            p[l].0[i] += delta;
                        } else {
                            p[l].1[i] += delta;
                        }
                        loss(&p, &dims, &data)
                    };
                    (bump(H) - bump(-H)) / (2.0 * H)
                })
                .collect();
            let analytic = if which == 0 { &grads.weights[l] } else { &grads.bias[l] };
            worst = worst.max(rel_err(analytic, &numeric));
        }
    }
    worst
}

/// Any f32 bit pattern, NaN payloads and infinities included.
pub fn any_f32_bits() -> impl proptest::strategy::Strategy<Value = f32> {
    use proptest::prelude::*;
    prop_oneof![
        4 => any::<u32>().prop_map(f32::from_bits),
        1 => Just(f32::NAN),
        1 => Just(f32::INFINITY),
        1 => Just(f32::NEG_INFINITY),
        1 => Just(-0.0f32),
        4 => -3.0f32..3.0,
    ]
}

/// A small dense network with arbitrary weight bit patterns.
pub fn arb_model(max_layers: usize, max_dim: usize) -> impl proptest::strategy::Strategy<Value = Model> {
    use proptest::prelude::*;
    proptest::collection::vec(1..=max_dim, 2..=max_layers + 1)
        .prop_flat_map(|dims| {
            let layers: Vec<_> = dims
                .windows(2)
                .map(|d| {
                    let (i, o) = (d[0], d[1]);
                    (
                        proptest::collection::vec(any_f32_bits(), i * o),
                        proptest::collection::vec(any_f32_bits(), o),
                        any::<bool>(),
                    )
                        .prop_map(move |(w, b, relu)| {
                            let act = if relu { Activation::Relu } else { Activation::None };
                            DenseLayer::new(i, o, w, b, act).unwrap()
                        })
                })
                .collect();
            layers
        })
        .prop_map(|layers| Model::new(layers).unwrap())
}

/// A finite-valued dataset matching `model`'s input and output sizes.
pub fn dataset_for(model: &Model, seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.input_dim();
    let c = model.num_classes();
    let features = (0..n * d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let labels = (0..n).map(|_| rng.gen_range(0..c as u32)).collect();
    Dataset::new(features, labels, d, c).unwrap()
}
