use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grad::{accumulate, loss, Gradients};
use super::Model;
use crate::error::{Error, Result};

/// Anything that can be fed to the trainer.
pub trait LabeledSample {
    fn features(&self) -> &[f64];
    fn label(&self) -> usize;
}

impl LabeledSample for (Vec<f64>, usize) {
    fn features(&self) -> &[f64] {
        &self.0
    }
    fn label(&self) -> usize {
        self.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Features are divided by this factor during optimisation and the
    /// factor is folded back into the first layer afterwards, so the
    /// returned model still takes unscaled inputs. With pixel inputs this
    /// keeps first-layer steps comparable to the other layers.
    pub input_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 0.01,
            batch_size: 32,
            seed: 0,
            input_scale: 1.0,
        }
    }
}

/// Minibatch SGD on cross-entropy. Returns the trained copy.
pub fn train<S: LabeledSample>(model: &Model, samples: &[S], config: &TrainConfig) -> Result<Model> {
    train_impl(model, samples, config, false).map(|(m, _)| m)
}

/// Like [`train`], also returning the mean dataset loss after each epoch.
pub fn train_with_history<S: LabeledSample>(
    model: &Model,
    samples: &[S],
    config: &TrainConfig,
) -> Result<(Model, Vec<f64>)> {
    train_impl(model, samples, config, true)
}

fn train_impl<S: LabeledSample>(
    model: &Model,
    samples: &[S],
    config: &TrainConfig,
    record: bool,
) -> Result<(Model, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::Parameter("learning_rate must be finite and non-negative".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Parameter("batch_size must be at least 1".into()));
    }
    let scale = config.input_scale;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Parameter("input_scale must be finite and positive".into()));
    }
    if scale == 1.0 || config.learning_rate == 0.0 {
        return sgd(model, samples, config, record);
    }
    let scaled: Vec<(Vec<f64>, usize)> = samples
        .iter()
        .map(|s| (s.features().iter().map(|v| v / scale).collect(), s.label()))
        .collect();
    let mut inner = model.clone();
    for w in &mut inner.layers_mut()[0].weights {
        *w *= scale;
    }
    let (mut trained, history) = sgd(&inner, &scaled, config, record)?;
    for w in &mut trained.layers_mut()[0].weights {
        *w /= scale;
    }
    Ok((trained, history))
}

fn sgd<S: LabeledSample>(
    model: &Model,
    samples: &[S],
    config: &TrainConfig,
    record: bool,
) -> Result<(Model, Vec<f64>)> {
    let mut model = model.clone();
    let mut history = Vec::new();
    if config.learning_rate == 0.0 {
        if record {
            let l = mean_loss(&model, samples)?;
            history = vec![l; config.epochs];
        }
        return Ok((model, history));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut grads = Gradients::zeros_like(&model);
            for &i in batch {
                let s = &samples[i];
                accumulate(&model, s.features(), s.label(), &mut grads)?;
            }
            let step = config.learning_rate / batch.len() as f64;
            for (j, layer) in model.layers_mut().iter_mut().enumerate() {
                for (w, g) in layer.weights.iter_mut().zip(&grads.weights[j]) {
                    *w -= step * g;
                }
                for (b, g) in layer.biases.iter_mut().zip(&grads.biases[j]) {
                    *b -= step * g;
                }
            }
        }
        if model
            .layers()
            .iter()
            .any(|l| l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()))
        {
            return Err(Error::Data("training diverged to non-finite weights".into()));
        }
        if record {
            history.push(mean_loss(&model, samples)?);
        }
    }
    Ok((model, history))
}

fn mean_loss<S: LabeledSample>(model: &Model, samples: &[S]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += loss(model, s.features(), s.label())?;
    }
    Ok(total / samples.len() as f64)
}

/// Fraction of samples whose predicted class equals the label.
pub fn accuracy<S: LabeledSample>(model: &Model, samples: &[S]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Data("cannot measure accuracy on an empty set".into()));
    }
    let mut correct = 0usize;
    for s in samples {
        if model.predict(s.features())? == s.label() {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(seed: u64, n: usize) -> Vec<(Vec<f64>, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = i % 2;
                let c = if label == 0 { -2.0 } else { 2.0 };
                let x = vec![c + rng.random_range(-1.0..1.0), c + rng.random_range(-1.0..1.0)];
                (x, label)
            })
            .collect()
    }

    #[test]
    fn separable_blobs_reach_high_accuracy() {
        let data = blobs(1, 200);
        let model = Model::random(2, &[8], 2, 1.0, 5).unwrap();
        let cfg = TrainConfig { epochs: 50, learning_rate: 0.05, batch_size: 16, seed: 2, input_scale: 1.0 };
        let trained = train(&model, &data, &cfg).unwrap();
        assert!(accuracy(&trained, &data).unwrap() >= 0.95);
    }

    #[test]
    fn full_batch_loss_is_non_increasing() {
        let data = blobs(3, 100);
        let model = Model::random(2, &[6], 2, 1.0, 9).unwrap();
        let cfg = TrainConfig { epochs: 40, learning_rate: 0.05, batch_size: data.len(), seed: 0, input_scale: 1.0 };
        let (_, history) = train_with_history(&model, &data, &cfg).unwrap();
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{history:?}");
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let data = blobs(4, 20);
        let model = Model::random(2, &[4], 2, 1.0, 1).unwrap();
        let cfg = TrainConfig { epochs: 5, learning_rate: 0.0, batch_size: 4, seed: 0, input_scale: 1.0 };
        assert_eq!(train(&model, &data, &cfg).unwrap(), model);
    }

    #[test]
    fn single_sample_is_memorised() {
        let data = vec![(vec![0.3, -0.8], 1usize)];
        let model = Model::random(2, &[4], 2, 1.0, 11).unwrap();
        let cfg = TrainConfig { epochs: 200, learning_rate: 0.1, batch_size: 1, seed: 0, input_scale: 1.0 };
        let trained = train(&model, &data, &cfg).unwrap();
        assert_eq!(trained.predict(&data[0].0).unwrap(), 1);
    }

    #[test]
    fn input_scaling_matches_training_on_scaled_features() {
        let data = blobs(6, 60);
        let scaled: Vec<(Vec<f64>, usize)> = data
            .iter()
            .map(|(x, y)| (x.iter().map(|v| v * 100.0).collect(), *y))
            .collect();
        let model = Model::random(2, &[4], 2, 1.0, 3).unwrap();
        let cfg = TrainConfig { epochs: 10, learning_rate: 0.05, batch_size: 8, seed: 1, input_scale: 1.0 };
        let plain = train(&model, &data, &cfg).unwrap();
        let mut folded = model.clone();
        for w in &mut folded.layers_mut()[0].weights {
            *w /= 100.0;
        }
        let via_scale = train(&folded, &scaled, &TrainConfig { input_scale: 100.0, ..cfg }).unwrap();
        for (a, b) in plain.layers()[0].weights().iter().zip(via_scale.layers()[0].weights()) {
            assert!((a / 100.0 - b).abs() < 1e-9);
        }
        for (x, y) in data.iter().zip(&scaled) {
            assert_eq!(plain.predict(x.0.as_slice()).unwrap(), via_scale.predict(&y.0).unwrap());
        }
    }

    #[test]
    fn empty_dataset_is_data_error() {
        let model = Model::random(2, &[4], 2, 1.0, 1).unwrap();
        let data: Vec<(Vec<f64>, usize)> = Vec::new();
        assert!(matches!(
            train(&model, &data, &TrainConfig::default()),
            Err(Error::Data(_))
        ));
    }
}
