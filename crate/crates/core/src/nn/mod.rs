//! Dense feedforward engine.
//!
//! Every other module queries models through this one: forward passes with
//! full activation traces, cross-entropy gradients with respect to inputs and
//! parameters, and minibatch SGD. All arithmetic is `f64`.

mod grad;
mod io;
mod train;

pub use grad::{input_gradient, loss, parameter_gradients, Gradients};
pub use io::{from_json, load_model, save_model, to_json, MODEL_FORMAT_VERSION};
pub use train::{accuracy, train, train_with_history, LabeledSample, TrainConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }
}

/// One fully connected layer. Weights are row-major, `out_width × in_width`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_width: usize,
    out_width: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) biases: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(
        in_width: usize,
        out_width: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> std::result::Result<Self, String> {
        if in_width == 0 || out_width == 0 {
            return Err("layer widths must be positive".into());
        }
        if weights.len() != in_width * out_width {
            return Err(format!(
                "expected {} weights for {out_width}x{in_width}, found {}",
                in_width * out_width,
                weights.len()
            ));
        }
        if biases.len() != out_width {
            return Err(format!(
                "expected {out_width} biases, found {}",
                biases.len()
            ));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err("non-finite weight or bias".into());
        }
        Ok(Self {
            in_width,
            out_width,
            weights,
            biases,
            activation,
        })
    }

    pub fn in_width(&self) -> usize {
        self.in_width
    }

    pub fn out_width(&self) -> usize {
        self.out_width
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// Incoming weights of neuron `k`.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.in_width..(k + 1) * self.in_width]
    }

    pub(crate) fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.weights[k * self.in_width..(k + 1) * self.in_width]
    }

    fn affine(&self, input: &[f64]) -> Vec<f64> {
        (0..self.out_width)
            .map(|k| {
                self.row(k)
                    .iter()
                    .zip(input)
                    .fold(self.biases[k], |acc, (w, x)| acc + w * x)
            })
            .collect()
    }
}

/// Pre- and post-activation values of one layer for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub layers: Vec<LayerTrace>,
    pub predicted_class: usize,
}

impl ActivationTrace {
    pub fn output(&self) -> &[f64] {
        &self.layers.last().expect("model has at least one layer").post
    }
}

/// A layered classifier: the subject under test.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<DenseLayer>,
    input_dim: usize,
    class_count: usize,
}

impl Model {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidModel("model has no layers".into()))?;
        let input_dim = first.in_width;
        let class_count = layers.last().map(|l| l.out_width).unwrap_or(0);
        if class_count < 2 {
            return Err(Error::Validation {
                layer: layers.len() - 1,
                message: format!("final layer must have at least 2 outputs, has {class_count}"),
            });
        }
        for (j, pair) in layers.windows(2).enumerate() {
            if pair[1].in_width != pair[0].out_width {
                return Err(Error::Validation {
                    layer: j + 1,
                    message: format!(
                        "input width {} does not match previous output width {}",
                        pair[1].in_width, pair[0].out_width
                    ),
                });
            }
        }
        let last = layers.len() - 1;
        if let Some(j) = layers[..last]
            .iter()
            .position(|l| l.activation == Activation::Softmax)
        {
            return Err(Error::Validation {
                layer: j,
                message: "softmax is only permitted on the final layer".into(),
            });
        }
        Ok(Self {
            layers,
            input_dim,
            class_count,
        })
    }

    /// He-initialised MLP with ReLU hidden layers and a softmax output.
    ///
    /// `input_scale` divides the first layer's initial weights so that inputs
    /// in pixel units start in a reasonable pre-activation range.
    pub fn random(
        input_dim: usize,
        hidden: &[usize],
        class_count: usize,
        input_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidModel("layer widths must be positive".into()));
        }
        if !(input_scale.is_finite() && input_scale > 0.0) {
            return Err(Error::Parameter("input_scale must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(class_count);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (j, w) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut std = (2.0 / fan_in as f64).sqrt();
            if j == 0 {
                std /= input_scale;
            }
            let normal = Normal::new(0.0, std).expect("positive std");
            let weights = (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect();
            let biases = (0..fan_out).map(|_| rng.random_range(-0.01..0.01)).collect();
            let activation = if j + 2 == widths.len() {
                Activation::Softmax
            } else {
                Activation::Relu
            };
            let layer = DenseLayer::new(fan_in, fan_out, weights, biases, activation)
                .map_err(|message| Error::Validation { layer: j, message })?;
            layers.push(layer);
        }
        Model::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Indices of all layers except the output layer.
    pub fn hidden_layers(&self) -> std::ops::Range<usize> {
        0..self.layers.len() - 1
    }

    /// The deepest hidden layer, or the output layer for single-layer models.
    pub fn deepest_hidden(&self) -> usize {
        self.layers.len().saturating_sub(2)
    }

    pub fn forward_with_trace(&self, x: &[f64]) -> Result<ActivationTrace> {
        if x.len() != self.input_dim {
            return Err(Error::InputShape {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("input contains non-finite values".into()));
        }
        let mut traces: Vec<LayerTrace> = Vec::with_capacity(self.layers.len());
        for (j, layer) in self.layers.iter().enumerate() {
            let input = traces.last().map_or(x, |t| t.post.as_slice());
            let pre = layer.affine(input);
            if pre.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow { layer: j });
            }
            let post = activate(layer.activation, &pre);
            traces.push(LayerTrace { pre, post });
        }
        let predicted_class = argmax(&traces.last().expect("nonempty").post);
        Ok(ActivationTrace {
            layers: traces,
            predicted_class,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.forward_with_trace(x)?.predicted_class)
    }
}

pub(crate) fn activate(activation: Activation, pre: &[f64]) -> Vec<f64> {
    match activation {
        Activation::Relu => pre.iter().map(|&v| v.max(0.0)).collect(),
        Activation::Identity => pre.to_vec(),
        Activation::Softmax => softmax(pre),
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
