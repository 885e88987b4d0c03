//! Study harnesses that run the pipeline end to end: coverage with and
//! without generated unfair pairs, generator success rates, the mutant sweep
//! and augmentation by selection strategy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coverage::{coverage_all, profile_ranges, CoverageReport, ProfileConfig, RangeProfile};
use crate::data::{Sample, SamplePair};
use crate::enhancement::{
    augment_retrain, fairness_score, km_st_select_pairs, mutate_model, random_select,
    MutationOperator, MutationSpec, Section, SelectionConfig,
};
use crate::error::{Error, Result};
use crate::generation::{generate_unfair, summarize, GenConfig, GenSummary, Strategy};
use crate::metrics::Metric;
use crate::nn::{accuracy, Model, TrainConfig};
use crate::par;
use crate::selection::{select_fairness_neurons, FairnessNeuronMap};
use crate::stats::pearson;

/// Everything a study reads: a trained model, its train and test samples
/// and the pairs derived from them.
#[derive(Debug, Clone, Copy)]
pub struct Material<'a> {
    pub model: &'a Model,
    pub train: &'a [Sample],
    pub test: &'a [Sample],
    pub train_pairs: &'a [SamplePair],
    pub test_pairs: &'a [SamplePair],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub alpha: f64,
    pub top_k: usize,
    pub bins: usize,
    /// Measured layers; empty means the deepest hidden layer.
    pub layers: Vec<usize>,
    pub generation: GenConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            top_k: 10,
            bins: 100,
            layers: Vec::new(),
            generation: GenConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn profile_config(&self) -> ProfileConfig {
        ProfileConfig {
            layers: self.layers.clone(),
            top_k: self.top_k,
            bins: self.bins,
        }
    }
}

/// Pairs the model treats fairly (identical predictions).
pub fn fair_pairs(model: &Model, pairs: &[SamplePair]) -> Result<Vec<SamplePair>> {
    let agree = par::try_map(pairs, |_, p| {
        Ok::<_, Error>(model.predict(&p.x)? == model.predict(&p.x_prime)?)
    })?;
    Ok(pairs
        .iter()
        .zip(agree)
        .filter(|(_, a)| *a)
        .map(|(p, _)| p.clone())
        .collect())
}

/// Neuron selection and range profile of a model, both derived from the
/// training pairs.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub nf_map: FairnessNeuronMap,
    pub profile: RangeProfile,
}

impl Analysis {
    pub fn new(model: &Model, training_pairs: &[SamplePair], config: &StudyConfig) -> Result<Self> {
        let nf_map = select_fairness_neurons(model, training_pairs, config.alpha, config.top_k)?;
        let profile = profile_ranges(model, training_pairs, &nf_map, &config.profile_config())?;
        Ok(Self { nf_map, profile })
    }

    pub fn reports(&self, model: &Model, pairs: &[SamplePair], metrics: &[Metric]) -> Result<Vec<CoverageReport>> {
        coverage_all(pairs, model, &self.nf_map, &self.profile, metrics)
    }

    /// Coverage ratio per metric, in [`Metric::ALL`] order.
    pub fn ratios(&self, model: &Model, pairs: &[SamplePair]) -> Result<Vec<f64>> {
        Ok(self
            .reports(model, pairs, &Metric::ALL)?
            .iter()
            .map(|r| r.ratio)
            .collect())
    }
}

fn strategy_config(base: &GenConfig, strategy: Strategy) -> GenConfig {
    GenConfig {
        strategy,
        ..base.clone()
    }
}

/// Final pairs of the successful runs.
pub fn generate_successes(model: &Model, seeds: &[SamplePair], config: &GenConfig) -> Result<Vec<SamplePair>> {
    Ok(generate_unfair(model, seeds, config)?
        .into_iter()
        .filter(|r| r.success)
        .map(|r| r.final_pair)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyCoverage {
    pub strategy: Strategy,
    pub generated: usize,
    /// Per metric, in [`Metric::ALL`] order.
    pub ratios: Vec<f64>,
    pub increases: Vec<f64>,
}

impl StrategyCoverage {
    pub fn mean_increase(&self) -> f64 {
        self.increases.iter().sum::<f64>() / self.increases.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageStudy {
    pub metrics: Vec<Metric>,
    pub fair_pairs: usize,
    pub fair_ratios: Vec<f64>,
    pub strategies: Vec<StrategyCoverage>,
    /// Fair pairs plus the output of every strategy.
    pub combined_generated: usize,
    pub combined_ratios: Vec<f64>,
}

impl CoverageStudy {
    /// Strategies whose mean increase over the five metrics is maximal.
    pub fn leaders(&self) -> Vec<Strategy> {
        let best = self
            .strategies
            .iter()
            .map(StrategyCoverage::mean_increase)
            .fold(f64::NEG_INFINITY, f64::max);
        self.strategies
            .iter()
            .filter(|s| s.mean_increase() >= best - 1e-12)
            .map(|s| s.strategy)
            .collect()
    }

    /// Whether the combined suite beats the fair suite on every metric.
    pub fn strictly_increases(&self) -> bool {
        self.combined_ratios
            .iter()
            .zip(&self.fair_ratios)
            .all(|(c, f)| c > f)
    }
}

/// Coverage of the fair test pairs, then of the fair pairs plus the unfair
/// pairs each strategy generates from them.
pub fn coverage_study(m: &Material, config: &StudyConfig) -> Result<CoverageStudy> {
    let analysis = Analysis::new(m.model, m.train_pairs, config)?;
    let fair = fair_pairs(m.model, m.test_pairs)?;
    if fair.is_empty() {
        return Err(Error::Data("the model has no fair test pairs".into()));
    }
    let fair_ratios = analysis.ratios(m.model, &fair)?;
    let mut strategies = Vec::new();
    let mut combined = fair.clone();
    for strategy in Strategy::ALL {
        let generated = generate_successes(m.model, &fair, &strategy_config(&config.generation, strategy))?;
        let mut suite = fair.clone();
        suite.extend(generated.iter().cloned());
        let ratios = analysis.ratios(m.model, &suite)?;
        let increases = ratios.iter().zip(&fair_ratios).map(|(a, b)| a - b).collect();
        strategies.push(StrategyCoverage {
            strategy,
            generated: generated.len(),
            ratios,
            increases,
        });
        combined.extend(generated);
    }
    Ok(CoverageStudy {
        metrics: Metric::ALL.to_vec(),
        fair_pairs: fair.len(),
        combined_generated: combined.len() - fair.len(),
        combined_ratios: analysis.ratios(m.model, &combined)?,
        fair_ratios,
        strategies,
    })
}

/// Success rate of each strategy on `seed_count` fair pairs drawn at random
/// from the test and training pairs.
pub fn generator_study(m: &Material, config: &GenConfig, seed_count: usize) -> Result<Vec<GenSummary>> {
    let mut pool = fair_pairs(m.model, m.test_pairs)?;
    pool.extend(fair_pairs(m.model, m.train_pairs)?);
    if pool.len() < seed_count {
        return Err(Error::Data(format!(
            "only {} fair pairs available, {seed_count} requested",
            pool.len()
        )));
    }
    let pick = random_select(pool.len(), seed_count, config.seed)?;
    let seeds: Vec<SamplePair> = pick.iter().map(|&i| pool[i].clone()).collect();
    Strategy::ALL
        .iter()
        .map(|&s| {
            let cfg = strategy_config(config, s);
            let results = generate_unfair(m.model, &seeds, &cfg)?;
            Ok(summarize(s, cfg.max_iterations, &results))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub per_operator: usize,
    /// Fuzzing intensity grows by this many weight standard deviations per mutant.
    pub fuzz_step: f64,
    /// Largest neuron count for the count-based operators.
    pub max_neurons: usize,
    /// Size of the fixed suite of pairs the original model treats fairly.
    pub suite_size: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            per_operator: 10,
            fuzz_step: 0.05,
            max_neurons: 5,
            suite_size: 500,
            seed: 0,
        }
    }
}

/// `per_operator` specs per operator with increasing intensity.
pub fn mutant_specs(config: &SweepConfig) -> Vec<MutationSpec> {
    let n = config.per_operator;
    let mut specs = Vec::new();
    for (o, op) in MutationOperator::ALL.into_iter().enumerate() {
        for i in 0..n {
            let intensity = match op {
                MutationOperator::GaussianFuzz => config.fuzz_step * (i + 1) as f64,
                // spread 1..=max_neurons over the sweep
                _ => (1 + i * config.max_neurons.max(1) / n.max(1)) as f64,
            };
            specs.push(MutationSpec {
                operator: op,
                intensity,
                target_layer: None,
                seed: config.seed.wrapping_mul(1_000).wrapping_add((o * n + i) as u64),
            });
        }
    }
    specs
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MutantRow {
    pub operator: MutationOperator,
    pub intensity: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub fairness_score: f64,
    /// Per metric, in [`Metric::ALL`] order.
    pub coverage: Vec<f64>,
}

/// Pearson matrix over the five coverage columns and the fairness score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// `None` where a column has zero variance.
    pub values: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MutationStudy {
    pub metrics: Vec<Metric>,
    pub suite_size: usize,
    pub rows: Vec<MutantRow>,
    /// Pearson(coverage, fairness_score) per metric; `None` when undefined.
    pub correlations: Vec<Option<f64>>,
    pub matrix: CorrelationMatrix,
    #[serde(skip)]
    pub mutants: Vec<Model>,
}

impl MutationStudy {
    pub fn fairness_range(&self) -> f64 {
        let f = self.rows.iter().map(|r| r.fairness_score);
        f.clone().fold(f64::NEG_INFINITY, f64::max) - f.fold(f64::INFINITY, f64::min)
    }

    /// Metrics whose correlation has the expected sign: positive for the
    /// layer-level similarities, negative for the distances.
    pub fn sign_agreements(&self) -> usize {
        self.metrics
            .iter()
            .zip(&self.correlations)
            .filter(|(m, c)| match c {
                Some(c) if m.is_layer_level() => *c > 0.0,
                Some(c) => *c < 0.0,
                None => false,
            })
            .count()
    }
}

fn correlation_matrix(rows: &[MutantRow]) -> CorrelationMatrix {
    let mut labels: Vec<String> = Metric::ALL.iter().map(|m| m.name().to_string()).collect();
    labels.push("fairness_score".into());
    let columns: Vec<Vec<f64>> = (0..labels.len())
        .map(|c| {
            rows.iter()
                .map(|r| r.coverage.get(c).copied().unwrap_or(r.fairness_score))
                .collect()
        })
        .collect();
    let values = (0..columns.len())
        .map(|i| {
            (0..columns.len())
                .map(|j| {
                    if i == j {
                        Some(1.0)
                    } else {
                        pearson(&columns[i], &columns[j]).ok()
                    }
                })
                .collect()
        })
        .collect();
    CorrelationMatrix { labels, values }
}

/// Scores each mutant. Fairness is measured on the test pairs. Coverage is
/// measured on one fixed random suite of pairs the original model treats
/// fairly, with each mutant's own neuron selection and range profile.
pub fn mutation_study(m: &Material, sweep: &SweepConfig, config: &StudyConfig) -> Result<MutationStudy> {
    let mut pool = fair_pairs(m.model, m.test_pairs)?;
    pool.extend(fair_pairs(m.model, m.train_pairs)?);
    if pool.is_empty() {
        return Err(Error::Data("the model has no fair pairs".into()));
    }
    let suite: Vec<SamplePair> = random_select(pool.len(), sweep.suite_size.clamp(1, pool.len()), sweep.seed)?
        .into_iter()
        .map(|i| pool[i].clone())
        .collect();
    let specs = mutant_specs(sweep);
    let scored = par::try_map(&specs, |_, spec| {
        let mutant = mutate_model(m.model, spec)?;
        let analysis = Analysis::new(&mutant, m.train_pairs, config)?;
        let row = MutantRow {
            operator: spec.operator,
            intensity: spec.intensity,
            seed: spec.seed,
            accuracy: accuracy(&mutant, m.test)?,
            fairness_score: fairness_score(&mutant, m.test_pairs)?,
            coverage: analysis.ratios(&mutant, &suite)?,
        };
        Ok::<_, Error>((row, mutant))
    })?;
    let (rows, mutants): (Vec<MutantRow>, Vec<Model>) = scored.into_iter().unzip();
    let fairness: Vec<f64> = rows.iter().map(|r| r.fairness_score).collect();
    let correlations = (0..Metric::ALL.len())
        .map(|c| {
            let cov: Vec<f64> = rows.iter().map(|r| r.coverage[c]).collect();
            pearson(&cov, &fairness).ok()
        })
        .collect();
    Ok(MutationStudy {
        metrics: Metric::ALL.to_vec(),
        suite_size: suite.len(),
        matrix: correlation_matrix(&rows),
        rows,
        correlations,
        mutants,
    })
}

/// How augmentation pairs are picked from the generated candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Picker {
    Random,
    KmSt(Metric),
}

impl Picker {
    pub const ALL: [Picker; 4] = [
        Picker::Random,
        Picker::KmSt(Metric::Tanimoto),
        Picker::KmSt(Metric::Cosine),
        Picker::KmSt(Metric::Spearman),
    ];

    pub fn label(self) -> &'static str {
        match self {
            Picker::Random => "RA",
            Picker::KmSt(Metric::Tanimoto) => "TC",
            Picker::KmSt(Metric::Cosine) => "CS",
            Picker::KmSt(Metric::Spearman) => "SC",
            Picker::KmSt(_) => "KM",
        }
    }
}

impl fmt::Display for Picker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Picker {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Picker::ALL
            .into_iter()
            .find(|p| p.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Configuration(format!("unknown picker {s:?}; expected RA, TC, CS or SC")))
    }
}

impl Serialize for Picker {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Picker {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhancementConfig {
    /// Share of the generated candidates each picker selects.
    pub select_fraction: f64,
    pub k_sections: usize,
    pub pickers: Vec<Picker>,
    pub retrain: TrainConfig,
    pub seed: u64,
}

impl Default for EnhancementConfig {
    fn default() -> Self {
        Self {
            select_fraction: 0.1,
            k_sections: 10,
            pickers: Picker::ALL.to_vec(),
            retrain: TrainConfig {
                epochs: 10,
                learning_rate: 0.02,
                batch_size: 32,
                seed: 0,
                input_scale: 255.0,
            },
            seed: 0,
        }
    }
}

/// Augmentation candidates and the validation parts fairness is scored on.
#[derive(Debug, Clone)]
pub struct EnhancementInputs {
    pub candidates: Vec<SamplePair>,
    pub validation: Vec<Vec<SamplePair>>,
}

/// Candidates are the unfair pairs all three strategies generate from the
/// fair training pairs. The validation parts are the test pairs and the
/// unfair pairs each strategy generates from the fair test pairs.
pub fn enhancement_inputs(m: &Material, generation: &GenConfig) -> Result<EnhancementInputs> {
    let fair_train = fair_pairs(m.model, m.train_pairs)?;
    let fair_test = fair_pairs(m.model, m.test_pairs)?;
    let mut candidates = Vec::new();
    let mut validation = vec![m.test_pairs.to_vec()];
    for strategy in Strategy::ALL {
        let cfg = strategy_config(generation, strategy);
        candidates.extend(generate_successes(m.model, &fair_train, &cfg)?);
        validation.push(generate_successes(m.model, &fair_test, &cfg)?);
    }
    Ok(EnhancementInputs { candidates, validation })
}

/// Fairness over a validation set made of equal parts: the mean of the
/// per-part scores, skipping empty parts.
pub fn mixed_fairness(model: &Model, parts: &[Vec<SamplePair>]) -> Result<f64> {
    let scores = parts
        .iter()
        .filter(|p| !p.is_empty())
        .map(|p| fairness_score(model, p))
        .collect::<Result<Vec<f64>>>()?;
    if scores.is_empty() {
        return Err(Error::Data("validation set is empty".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnhancementRow {
    pub picker: Picker,
    /// Candidate indices, in selection order.
    pub selected: Vec<usize>,
    /// Section layout for the stratified pickers.
    pub sections: Option<Vec<Section>>,
    pub accuracy: f64,
    pub fairness_score: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnhancementStudy {
    pub candidates: usize,
    pub n_select: usize,
    pub validation_pairs: usize,
    pub baseline_accuracy: f64,
    pub baseline_fairness: f64,
    pub rows: Vec<EnhancementRow>,
    #[serde(skip)]
    pub models: Vec<Model>,
}

impl EnhancementStudy {
    pub fn row(&self, picker: Picker) -> Option<&EnhancementRow> {
        self.rows.iter().find(|r| r.picker == picker)
    }
}

/// Picks augmentation sets with each configured picker, retrains a copy of
/// the model on the training samples plus each set, and scores the result.
pub fn enhancement_study(
    m: &Material,
    study: &StudyConfig,
    config: &EnhancementConfig,
    inputs: &EnhancementInputs,
) -> Result<EnhancementStudy> {
    let candidates = &inputs.candidates;
    if candidates.is_empty() {
        return Err(Error::Selection("no generated candidates to select from".into()));
    }
    if !(config.select_fraction > 0.0 && config.select_fraction <= 1.0) {
        return Err(Error::Parameter("select_fraction must lie in (0, 1]".into()));
    }
    let n_select = ((config.select_fraction * candidates.len() as f64).round() as usize).max(1);
    let needs_map = config.pickers.iter().any(|p| matches!(p, Picker::KmSt(_)));
    let nf_map = if needs_map {
        Some(select_fairness_neurons(m.model, m.train_pairs, study.alpha, study.top_k)?)
    } else {
        None
    };
    let retrain = TrainConfig {
        seed: config.seed,
        ..config.retrain
    };

    let mut rows = Vec::new();
    let mut models = Vec::new();
    for &picker in &config.pickers {
        let (selected, sections) = match (picker, &nf_map) {
            (Picker::KmSt(metric), Some(map)) => {
                let sel_cfg = SelectionConfig {
                    metric,
                    layer: study.layers.first().copied(),
                    k_sections: config.k_sections,
                    n_select,
                    seed: config.seed,
                };
                let sel = km_st_select_pairs(m.model, candidates, map, &sel_cfg)?;
                (sel.indices, Some(sel.sections))
            }
            _ => (random_select(candidates.len(), n_select, config.seed)?, None),
        };
        let chosen: Vec<SamplePair> = selected.iter().map(|&i| candidates[i].clone()).collect();
        let retrained = augment_retrain(m.model, m.train, &chosen, &retrain)?;
        rows.push(EnhancementRow {
            picker,
            selected,
            sections,
            accuracy: accuracy(&retrained.model, m.test)?,
            fairness_score: mixed_fairness(&retrained.model, &inputs.validation)?,
            warning: retrained.warning,
        });
        models.push(retrained.model);
    }
    Ok(EnhancementStudy {
        candidates: candidates.len(),
        n_select,
        validation_pairs: inputs.validation.iter().map(Vec::len).sum(),
        baseline_accuracy: accuracy(m.model, m.test)?,
        baseline_fairness: mixed_fairness(m.model, &inputs.validation)?,
        rows,
        models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picker_labels_round_trip() {
        for p in Picker::ALL {
            assert_eq!(p.label().parse::<Picker>().unwrap(), p);
        }
        assert!(matches!("XX".parse::<Picker>(), Err(Error::Configuration(_))));
    }

    #[test]
    fn sweep_spans_requested_intensities() {
        let specs = mutant_specs(&SweepConfig::default());
        assert_eq!(specs.len(), 40);
        let counts: Vec<f64> = specs
            .iter()
            .filter(|s| s.operator == MutationOperator::WeightShuffle)
            .map(|s| s.intensity)
            .collect();
        assert_eq!(counts.first(), Some(&1.0));
        assert_eq!(counts.last(), Some(&5.0));
        let fuzz = specs
            .iter()
            .filter(|s| s.operator == MutationOperator::GaussianFuzz)
            .map(|s| s.intensity)
            .fold(0.0, f64::max);
        assert!((fuzz - 0.5).abs() < 1e-12);
    }

    #[test]
    fn matrix_is_symmetric_with_unit_diagonal() {
        let rows: Vec<MutantRow> = (0..6)
            .map(|i| {
                let t = i as f64;
                MutantRow {
                    operator: MutationOperator::GaussianFuzz,
                    intensity: t,
                    seed: i,
                    accuracy: 0.9,
                    fairness_score: 0.5 + 0.05 * t,
                    coverage: vec![t, t * t, (t * 1.7).sin(), 6.0 - t, (t - 2.5).abs()],
                }
            })
            .collect();
        let m = correlation_matrix(&rows);
        assert_eq!(m.labels.len(), 6);
        for i in 0..6 {
            assert_eq!(m.values[i][i], Some(1.0));
            for j in 0..6 {
                assert_eq!(m.values[i][j], m.values[j][i]);
            }
        }
        assert!((m.values[0][5].unwrap() - 1.0).abs() < 1e-12);
        assert!((m.values[3][5].unwrap() + 1.0).abs() < 1e-12);
    }
}
