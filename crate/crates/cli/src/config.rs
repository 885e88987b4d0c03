use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fairtest_core::bench::BenchConfig;
use fairtest_core::data::{
    pair_all, read_dataset, read_pairs, Dataset, PatchFlip, SamplePair, Transform,
};
use fairtest_core::experiment::{EnhancementConfig, StudyConfig, SweepConfig};
use fairtest_core::generation::{GenConfig, Strategy};
use fairtest_core::metrics::Metric;
use fairtest_core::nn::{load_model, Model};
use serde::{Deserialize, Serialize};

use crate::error::{at, CliError};

/// How the counterpart `x′` of each sample is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformConfig {
    /// Overwrite `patch_indices` with the fill listed under the attribute name.
    PatchFlip {
        patch_indices: Vec<usize>,
        values: BTreeMap<String, Vec<f64>>,
    },
    /// Pairs stored in paired containers.
    Paired { train_pairs: PathBuf, test_pairs: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Strategies to run; empty means `generation.strategy` alone.
    pub strategies: Vec<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides every nested seed when set.
    pub seed: Option<u64>,
    pub model: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub transform: Option<TransformConfig>,
    pub alpha: f64,
    pub top_k: usize,
    /// Bins per coverage dimension.
    pub bins: usize,
    /// Measured layers; empty means the deepest hidden layer.
    pub layers: Vec<usize>,
    pub metrics: Vec<String>,
    pub generation: GenConfig,
    pub generate: GenerateConfig,
    pub enhancement: EnhancementConfig,
    pub sweep: SweepConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let study = StudyConfig::default();
        Self {
            seed: None,
            model: None,
            train_data: None,
            test_data: None,
            transform: None,
            alpha: study.alpha,
            top_k: study.top_k,
            bins: study.bins,
            layers: study.layers,
            metrics: Metric::ALL.iter().map(|m| m.name().to_string()).collect(),
            generation: study.generation,
            generate: GenerateConfig::default(),
            enhancement: EnhancementConfig::default(),
            sweep: SweepConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Reads a TOML file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::new("configuration", format!("cannot read {}: {e}", path.display()))
        })?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::new("configuration", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.model);
        resolve(base, &mut cfg.train_data);
        resolve(base, &mut cfg.test_data);
        if let Some(TransformConfig::Paired { train_pairs, test_pairs }) = &mut cfg.transform {
            for p in [train_pairs, test_pairs] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Applies the seed override to every nested configuration.
    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if seed.is_some() {
            self.seed = seed;
        }
        if let Some(s) = self.seed {
            self.generation.seed = s;
            self.enhancement.seed = s;
            self.sweep.seed = s;
            self.bench.seed = s;
            self.bench.train.seed = s;
        }
    }

    pub fn metrics(&self) -> Result<Vec<Metric>, CliError> {
        let metrics = self
            .metrics
            .iter()
            .map(|m| m.parse::<Metric>())
            .collect::<Result<Vec<_>, _>>()?;
        if metrics.is_empty() {
            return Err(CliError::new("configuration", "metrics list is empty"));
        }
        Ok(metrics)
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        if self.generate.strategies.is_empty() {
            vec![self.generation.strategy]
        } else {
            self.generate.strategies.clone()
        }
    }

    pub fn study(&self) -> StudyConfig {
        StudyConfig {
            alpha: self.alpha,
            top_k: self.top_k,
            bins: self.bins,
            layers: self.layers.clone(),
            generation: self.generation.clone(),
        }
    }

    fn require<'a>(&self, p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
        p.as_deref()
            .ok_or_else(|| CliError::new("configuration", format!("`{key}` is not set")))
    }

    /// Loads the model, datasets and pairs named in the config.
    pub fn inputs(&self) -> Result<Inputs, CliError> {
        let path = self.require(&self.model, "model")?;
        let model = at(load_model(path), path)?;
        let path = self.require(&self.train_data, "train_data")?;
        let train = at(read_dataset(path), path)?;
        let path = self.require(&self.test_data, "test_data")?;
        let test = at(read_dataset(path), path)?;
        let (train_pairs, test_pairs) = match &self.transform {
            None => {
                return Err(CliError::new("configuration", "`transform` section is missing"));
            }
            Some(TransformConfig::Paired { train_pairs, test_pairs }) => {
                let train_pairs = at(read_pairs(train_pairs), train_pairs)?.pairs;
                (train_pairs, at(read_pairs(test_pairs), test_pairs)?.pairs)
            }
            Some(TransformConfig::PatchFlip { patch_indices, values }) => {
                let transform = patch_flip(&train, patch_indices, values)?;
                (pair_all(&train, &transform)?, pair_all(&test, &transform)?)
            }
        };
        Ok(Inputs {
            model,
            train,
            test,
            train_pairs,
            test_pairs,
        })
    }
}

fn patch_flip(
    dataset: &Dataset,
    indices: &[usize],
    values: &BTreeMap<String, Vec<f64>>,
) -> Result<Transform, CliError> {
    let mut map = BTreeMap::new();
    for (name, fill) in values {
        map.insert(dataset.tag(name)?, fill.clone());
    }
    Ok(Transform::PatchFlip(PatchFlip::new(
        indices.to_vec(),
        map,
        dataset.dim(),
    )?))
}

pub struct Inputs {
    pub model: Model,
    pub train: Dataset,
    pub test: Dataset,
    pub train_pairs: Vec<SamplePair>,
    pub test_pairs: Vec<SamplePair>,
}

impl Inputs {
    pub fn material(&self) -> fairtest_core::experiment::Material<'_> {
        fairtest_core::experiment::Material {
            model: &self.model,
            train: self.train.samples(),
            test: self.test.samples(),
            train_pairs: &self.train_pairs,
            test_pairs: &self.test_pairs,
        }
    }
}
