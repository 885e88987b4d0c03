//! The desk-scale benchmark: a synthetic patch-flip dataset and a trained
//! three-layer MLP, shared by the CLI and the experiment harness.

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, pair_all, Dataset, SamplePair, SyntheticSpec, Transform};
use crate::error::{Error, Result};
use crate::experiment::Material;
use crate::nn::{accuracy, train, Model, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub seed: u64,
    pub n_per_class: usize,
    pub class_count: usize,
    pub dim: usize,
    pub hidden: Vec<usize>,
    pub synthetic: SyntheticSpec,
    /// Fraction of samples used for training; the rest is the test set.
    pub train_fraction: f64,
    pub input_scale: f64,
    pub train: TrainConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_per_class: 500,
            class_count: 2,
            dim: 64,
            hidden: vec![64, 32],
            synthetic: SyntheticSpec {
                attribute_bias: 0.8,
                ..SyntheticSpec::default()
            },
            train_fraction: 0.8,
            input_scale: 255.0,
            train: TrainConfig {
                epochs: 30,
                learning_rate: 0.1,
                batch_size: 32,
                seed: 0,
                input_scale: 255.0,
            },
        }
    }
}

impl BenchConfig {
    pub fn with_seed(seed: u64) -> Self {
        let mut cfg = Self::default();
        cfg.seed = seed;
        cfg.train.seed = seed;
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct DeskBenchmark {
    pub config: BenchConfig,
    pub train: Dataset,
    pub test: Dataset,
    pub transform: Transform,
    pub model: Model,
    pub train_pairs: Vec<SamplePair>,
    pub test_pairs: Vec<SamplePair>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

impl DeskBenchmark {
    pub fn material(&self) -> Material<'_> {
        Material {
            model: &self.model,
            train: self.train.samples(),
            test: self.test.samples(),
            train_pairs: &self.train_pairs,
            test_pairs: &self.test_pairs,
        }
    }

    pub fn build(config: &BenchConfig) -> Result<Self> {
        let (dataset, transform) = generate_synthetic(
            config.seed,
            config.n_per_class,
            config.class_count,
            config.dim,
            &config.synthetic,
        )?;
        let (train_set, test_set) = dataset.split(config.train_fraction, config.seed)?;
        if train_set.is_empty() || test_set.is_empty() {
            return Err(Error::Parameter(
                "train_fraction leaves an empty train or test split".into(),
            ));
        }
        let init = Model::random(
            config.dim,
            &config.hidden,
            config.class_count,
            config.input_scale,
            config.seed,
        )?;
        let model = train(&init, train_set.samples(), &config.train)?;
        let train_accuracy = accuracy(&model, train_set.samples())?;
        let test_accuracy = accuracy(&model, test_set.samples())?;
        let train_pairs = pair_all(&train_set, &transform)?;
        let test_pairs = pair_all(&test_set, &transform)?;
        Ok(Self {
            config: config.clone(),
            train: train_set,
            test: test_set,
            transform,
            model,
            train_pairs,
            test_pairs,
            train_accuracy,
            test_accuracy,
        })
    }
}
