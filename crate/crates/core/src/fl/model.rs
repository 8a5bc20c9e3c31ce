//! Fully connected softmax classifier with hand-written backpropagation.
//!
//! Parameters are one flat vector, layer by layer; within a layer the
//! weight matrix (row-major, `out × in`) comes first, then the bias.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Flat parameter vector `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub theta: Vec<f64>,
}

impl ModelParams {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    inputs: usize,
    outputs: usize,
    weights: usize,
    bias: usize,
}

/// Network architecture. Holds no parameters.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
    num_params: usize,
}

impl Mlp {
    pub fn new(num_features: usize, hidden: &[usize], num_classes: usize, activation: Activation) -> Self {
        let mut widths = vec![num_features];
        widths.extend_from_slice(hidden);
        widths.push(num_classes);
        let mut offset = 0;
        let layers = widths
            .windows(2)
            .map(|w| {
                let layer = Layer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: offset,
                    bias: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                layer
            })
            .collect();
        Mlp {
            layers,
            activation,
            num_params: offset,
        }
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn num_features(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// He (ReLU) or Glorot (tanh) normal weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelParams {
        let mut theta = vec![0.0; self.num_params];
        for layer in &self.layers {
            let std = match self.activation {
                Activation::Relu => (2.0 / layer.inputs as f64).sqrt(),
                Activation::Tanh => (2.0 / (layer.inputs + layer.outputs) as f64).sqrt(),
            };
            let dist = Normal::new(0.0, std).expect("valid std");
            for w in &mut theta[layer.weights..layer.bias] {
                *w = dist.sample(rng);
            }
        }
        ModelParams { theta }
    }

    /// Activations of every layer; the last entry holds the logits.
    fn forward(&self, theta: &[f64], x: &[f32]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.iter().map(|&v| v as f64).collect());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = &acts[l];
            let w = &theta[layer.weights..layer.bias];
            let b = &theta[layer.bias..layer.bias + layer.outputs];
            let last = l + 1 == self.layers.len();
            let out: Vec<f64> = (0..layer.outputs)
                .map(|o| {
                    let row = &w[o * layer.inputs..(o + 1) * layer.inputs];
                    let z = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                    if last {
                        z
                    } else {
                        self.activation.apply(z)
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn logits(&self, theta: &[f64], x: &[f32]) -> Vec<f64> {
        self.forward(theta, x).pop().unwrap_or_default()
    }

    pub fn predict(&self, theta: &[f64], x: &[f32]) -> usize {
        argmax(&self.logits(theta, x))
    }

    /// Mean cross-entropy over `batch` (indices into `data`).
    pub fn loss(&self, theta: &[f64], data: &Dataset, batch: &[usize]) -> f64 {
        batch
            .iter()
            .map(|&i| {
                let logits = self.logits(theta, data.features(i));
                log_sum_exp(&logits) - logits[data.label(i)]
            })
            .sum::<f64>()
            / batch.len() as f64
    }

    /// Mean cross-entropy over `batch` and its gradient.
    pub fn loss_and_grad(&self, theta: &[f64], data: &Dataset, batch: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.num_params];
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            let acts = self.forward(theta, data.features(i));
            let logits = acts.last().expect("at least one layer");
            let lse = log_sum_exp(logits);
            let label = data.label(i);
            loss += lse - logits[label];
            // dL/dz at the output: softmax - onehot
            let mut delta: Vec<f64> = logits.iter().map(|z| (z - lse).exp() * scale).collect();
            delta[label] -= scale;
            for (l, layer) in self.layers.iter().enumerate().rev() {
                let input = &acts[l];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &mut grad[layer.weights + o * layer.inputs..layer.weights + (o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                    grad[layer.bias + o] += d;
                }
                if l == 0 {
                    break;
                }
                let w = &theta[layer.weights..layer.bias];
                delta = (0..layer.inputs)
                    .map(|j| {
                        let back: f64 = delta.iter().enumerate().map(|(o, d)| d * w[o * layer.inputs + j]).sum();
                        back * self.activation.derivative(input[j])
                    })
                    .collect();
            }
        }
        (loss * scale, grad)
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn argmax(z: &[f64]) -> usize {
    z.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        )
        .0
}

/// Fraction of samples whose arg-max prediction equals the label.
pub fn evaluate(model: &Mlp, theta: &ModelParams, data: &Dataset) -> f64 {
    let correct = (0..data.len())
        .filter(|&i| model.predict(&theta.theta, data.features(i)) == data.label(i))
        .count();
    correct as f64 / data.len() as f64
}
