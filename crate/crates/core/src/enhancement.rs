//! Test selection, augmented retraining, fairness scoring and model mutation.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Sample, SamplePair};
use crate::error::{Error, Result};
use crate::metrics::{layer_metric, LayerSignature, Metric};
use crate::nn::{train, Model, TrainConfig};
use crate::par;
use crate::selection::FairnessNeuronMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub metric: Metric,
    /// `None` selects the deepest hidden layer.
    pub layer: Option<usize>,
    pub k_sections: usize,
    pub n_select: usize,
    pub seed: u64,
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.metric.is_layer_level() {
            return Err(Error::Configuration(format!(
                "selection uses layer-level metrics only, got {}",
                self.metric
            )));
        }
        if self.k_sections == 0 {
            return Err(Error::Parameter("k_sections must be at least 1".into()));
        }
        if self.n_select == 0 {
            return Err(Error::Parameter("n_select must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub lower: f64,
    pub upper: f64,
    pub available: usize,
    pub quota: usize,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Candidate indices, grouped by section.
    pub indices: Vec<usize>,
    /// Section of each entry of `indices`.
    pub section_of: Vec<usize>,
    pub c_min: f64,
    pub c_max: f64,
    pub sections: Vec<Section>,
}

/// K-multisection selection: split `[C_min, C_max]` into `k` equal sections
/// and draw a near-equal quota from each without replacement. Quota that an
/// under-populated section cannot fill is handed out one candidate at a time
/// to the sections that still have candidates, in section order.
pub fn km_st_select(values: &[f64], k_sections: usize, n_select: usize, seed: u64) -> Result<Selection> {
    if values.is_empty() {
        return Err(Error::Selection("no candidates".into()));
    }
    if k_sections == 0 || n_select == 0 {
        return Err(Error::Parameter("k_sections and n_select must be at least 1".into()));
    }
    if n_select > values.len() {
        return Err(Error::Selection(format!(
            "cannot select {n_select} from {} candidates",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Selection("candidate metric values must be finite".into()));
    }
    let c_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let c_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // a zero-width range collapses to one section
    let k = if c_max > c_min { k_sections } else { 1 };
    let width = (c_max - c_min) / k as f64;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &v) in values.iter().enumerate() {
        let s = if width > 0.0 {
            (((v - c_min) / width).floor() as usize).min(k - 1)
        } else {
            0
        };
        members[s].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for m in &mut members {
        m.shuffle(&mut rng);
    }
    let mut quotas = vec![n_select / k; k];
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);
    for &s in order.iter().take(n_select % k) {
        quotas[s] += 1;
    }
    let mut taken: Vec<usize> = (0..k).map(|s| quotas[s].min(members[s].len())).collect();
    let mut shortfall = n_select - taken.iter().sum::<usize>();
    while shortfall > 0 {
        for s in 0..k {
            if shortfall > 0 && taken[s] < members[s].len() {
                taken[s] += 1;
                shortfall -= 1;
            }
        }
    }

    let mut indices = Vec::with_capacity(n_select);
    let mut section_of = Vec::with_capacity(n_select);
    let mut sections = Vec::with_capacity(k);
    for s in 0..k {
        indices.extend_from_slice(&members[s][..taken[s]]);
        section_of.extend(std::iter::repeat_n(s, taken[s]));
        let lower = c_min + width * s as f64;
        sections.push(Section {
            lower,
            upper: if s + 1 == k { c_max } else { c_min + width * (s + 1) as f64 },
            available: members[s].len(),
            quota: quotas[s],
            selected: taken[s],
        });
    }
    Ok(Selection {
        indices,
        section_of,
        c_min,
        c_max,
        sections,
    })
}

/// Uniform selection without replacement, the baseline against KM-ST.
pub fn random_select(candidates: usize, n_select: usize, seed: u64) -> Result<Vec<usize>> {
    if n_select > candidates {
        return Err(Error::Selection(format!(
            "cannot select {n_select} from {candidates} candidates"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, candidates, n_select).into_vec())
}

/// Layer-level metric value of each pair; `None` where undefined.
pub fn layer_metric_values(
    model: &Model,
    pairs: &[SamplePair],
    nf_map: &FairnessNeuronMap,
    metric: Metric,
    layer: usize,
) -> Result<Vec<Option<f64>>> {
    if !metric.is_layer_level() {
        return Err(Error::Configuration(format!("{metric} is not a layer-level metric")));
    }
    if layer >= model.layers().len() {
        return Err(Error::Configuration(format!("layer {layer} does not exist")));
    }
    let nf = nf_map.selected(layer);
    par::try_map(pairs, |_, p| {
        let a = model.forward_with_trace(&p.x)?;
        let b = model.forward_with_trace(&p.x_prime)?;
        layer_metric(
            metric,
            &LayerSignature::from_trace(&a, layer, nf),
            &LayerSignature::from_trace(&b, layer, nf),
        )
    })
}

/// KM-ST over candidate pairs using a layer-level metric. Pairs whose metric
/// is undefined are not eligible. Returned indices point into `pairs`.
pub fn km_st_select_pairs(
    model: &Model,
    pairs: &[SamplePair],
    nf_map: &FairnessNeuronMap,
    config: &SelectionConfig,
) -> Result<Selection> {
    config.validate()?;
    let layer = config.layer.unwrap_or_else(|| model.deepest_hidden());
    let values = layer_metric_values(model, pairs, nf_map, config.metric, layer)?;
    let (eligible, vals): (Vec<usize>, Vec<f64>) = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .unzip();
    let mut selection = km_st_select(&vals, config.k_sections, config.n_select, config.seed)?;
    for i in &mut selection.indices {
        *i = eligible[*i];
    }
    Ok(selection)
}

/// Fraction of pairs on which the model's predictions agree.
pub fn fairness_score(model: &Model, pairs: &[SamplePair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Data("fairness score needs at least one pair".into()));
    }
    let agree = par::try_map(pairs, |_, p| {
        Ok::<_, Error>(model.predict(&p.x)? == model.predict(&p.x_prime)?)
    })?;
    Ok(agree.iter().filter(|a| **a).count() as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone)]
pub struct Retrained {
    pub model: Model,
    pub warning: Option<String>,
}

/// Retrains on the base set plus both elements of every selected pair, each
/// labeled with the pair's ground-truth label.
pub fn augment_retrain(
    model: &Model,
    base_train: &[Sample],
    selected: &[SamplePair],
    config: &TrainConfig,
) -> Result<Retrained> {
    let warning = selected
        .is_empty()
        .then(|| "empty augmentation set; retraining on the base set only".to_string());
    let mut samples: Vec<(Vec<f64>, usize)> =
        base_train.iter().map(|s| (s.x.clone(), s.label)).collect();
    for p in selected {
        samples.push((p.x.clone(), p.label));
        samples.push((p.x_prime.clone(), p.label));
    }
    Ok(Retrained {
        model: train(model, &samples, config)?,
        warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOperator {
    GaussianFuzz,
    WeightShuffle,
    NeuronSwitch,
    ActivationInverse,
}

impl MutationOperator {
    pub const ALL: [MutationOperator; 4] = [
        MutationOperator::GaussianFuzz,
        MutationOperator::WeightShuffle,
        MutationOperator::NeuronSwitch,
        MutationOperator::ActivationInverse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MutationOperator::GaussianFuzz => "gaussian_fuzz",
            MutationOperator::WeightShuffle => "weight_shuffle",
            MutationOperator::NeuronSwitch => "neuron_switch",
            MutationOperator::ActivationInverse => "activation_inverse",
        }
    }
}

impl fmt::Display for MutationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MutationOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MutationOperator::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Configuration(format!("unknown mutation operator {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationSpec {
    pub operator: MutationOperator,
    /// Noise scale for fuzzing; neuron count for the neuron-level operators.
    pub intensity: f64,
    /// `None` means every layer for fuzzing and a random hidden layer otherwise.
    pub target_layer: Option<usize>,
    pub seed: u64,
}

fn neuron_count(intensity: f64, width: usize) -> Result<usize> {
    let n = intensity.round();
    if n < 1.0 {
        return Err(Error::Mutation(format!(
            "intensity {intensity} selects no neurons"
        )));
    }
    Ok((n as usize).min(width))
}

/// Applies one seeded mutation. Layer shapes and activations never change.
pub fn mutate_model(model: &Model, spec: &MutationSpec) -> Result<Model> {
    if !(spec.intensity.is_finite() && spec.intensity >= 0.0) {
        return Err(Error::Mutation("intensity must be finite and non-negative".into()));
    }
    let layer_count = model.layers().len();
    if let Some(t) = spec.target_layer {
        if t >= layer_count {
            return Err(Error::Mutation(format!(
                "target layer {t} does not exist; model has {layer_count} layers"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut mutant = model.clone();
    let hidden = model.hidden_layers();
    let pick_layer = |rng: &mut ChaCha8Rng| {
        spec.target_layer.unwrap_or_else(|| {
            if hidden.is_empty() {
                0
            } else {
                rng.random_range(hidden.clone())
            }
        })
    };

    match spec.operator {
        MutationOperator::GaussianFuzz => {
            if spec.intensity == 0.0 {
                return Ok(mutant);
            }
            let targets: Vec<usize> = match spec.target_layer {
                Some(t) => vec![t],
                None => (0..layer_count).collect(),
            };
            for j in targets {
                let layer = &mut mutant.layers_mut()[j];
                let n = layer.weights.len() as f64;
                let mean = layer.weights.iter().sum::<f64>() / n;
                let std = (layer.weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n).sqrt();
                if std == 0.0 {
                    continue;
                }
                let noise = Normal::new(0.0, spec.intensity * std)
                    .map_err(|e| Error::Mutation(e.to_string()))?;
                for w in &mut layer.weights {
                    *w += noise.sample(&mut rng);
                }
            }
        }
        MutationOperator::WeightShuffle => {
            let j = pick_layer(&mut rng);
            let layer = &mut mutant.layers_mut()[j];
            let count = neuron_count(spec.intensity, layer.out_width())?;
            for k in index::sample(&mut rng, layer.out_width(), count) {
                layer.row_mut(k).shuffle(&mut rng);
            }
        }
        MutationOperator::NeuronSwitch => {
            let j = pick_layer(&mut rng);
            let layer = &mut mutant.layers_mut()[j];
            let width = layer.out_width();
            if width < 2 {
                return Err(Error::Mutation(format!(
                    "neuron switch needs at least two neurons; layer {j} has {width}"
                )));
            }
            let chosen = index::sample(&mut rng, width, 2);
            let (a, b) = (chosen.index(0), chosen.index(1));
            let in_w = layer.in_width();
            for i in 0..in_w {
                layer.weights.swap(a * in_w + i, b * in_w + i);
            }
            layer.biases.swap(a, b);
        }
        MutationOperator::ActivationInverse => {
            let j = pick_layer(&mut rng);
            let layer = &mut mutant.layers_mut()[j];
            let count = neuron_count(spec.intensity, layer.out_width())?;
            for k in index::sample(&mut rng, layer.out_width(), count) {
                for w in layer.row_mut(k) {
                    *w = -*w;
                }
                layer.biases[k] = -layer.biases[k];
            }
        }
    }
    Ok(mutant)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_quotas() {
        let values: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let sel = km_st_select(&values, 5, 10, 3).unwrap();
        assert_eq!(sel.indices.len(), 10);
        assert!(sel.sections.iter().all(|s| s.selected == 2));
        for (&i, &s) in sel.indices.iter().zip(&sel.section_of) {
            let sec = &sel.sections[s];
            assert!(values[i] >= sec.lower && values[i] <= sec.upper);
        }
    }

    #[test]
    fn identical_values_use_one_section() {
        let sel = km_st_select(&[0.4; 20], 4, 7, 1).unwrap();
        assert_eq!(sel.sections.len(), 1);
        assert_eq!(sel.indices.len(), 7);
        let mut sorted = sel.indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 7);
    }

    #[test]
    fn empty_section_quota_is_redistributed() {
        // sections of width 0.25 over [0, 1]; nothing lands in [0.25, 0.5)
        let mut values = vec![0.0, 0.05, 0.1, 0.15, 0.2];
        values.extend([0.55, 0.6, 0.65, 0.7, 0.8, 0.85, 0.9, 0.95, 1.0]);
        let sel = km_st_select(&values, 4, 8, 9).unwrap();
        assert_eq!(sel.indices.len(), 8);
        assert_eq!(sel.sections[1].available, 0);
        assert_eq!(sel.sections[1].selected, 0);
        let total: usize = sel.sections.iter().map(|s| s.selected).sum();
        assert_eq!(total, 8);
        assert!(sel.sections.iter().all(|s| s.selected <= s.available));
    }

    #[test]
    fn too_many_requested() {
        assert!(matches!(km_st_select(&[0.1, 0.2], 2, 3, 0), Err(Error::Selection(_))));
        assert!(matches!(random_select(2, 3, 0), Err(Error::Selection(_))));
    }

    #[test]
    fn distance_metrics_cannot_drive_selection() {
        let cfg = SelectionConfig {
            metric: Metric::Absolute,
            layer: None,
            k_sections: 4,
            n_select: 4,
            seed: 0,
        };
        assert!(matches!(cfg.validate(), Err(Error::Configuration(_))));
    }

    #[test]
    fn neuron_switch_is_an_involution() {
        let model = Model::random(6, &[5, 4], 3, 1.0, 2).unwrap();
        let spec = MutationSpec {
            operator: MutationOperator::NeuronSwitch,
            intensity: 1.0,
            target_layer: Some(0),
            seed: 17,
        };
        let once = mutate_model(&model, &spec).unwrap();
        assert_ne!(once, model);
        assert_eq!(mutate_model(&once, &spec).unwrap(), model);
    }

    #[test]
    fn zero_fuzz_is_identity() {
        let model = Model::random(6, &[5], 2, 1.0, 2).unwrap();
        let spec = MutationSpec {
            operator: MutationOperator::GaussianFuzz,
            intensity: 0.0,
            target_layer: None,
            seed: 1,
        };
        assert_eq!(mutate_model(&model, &spec).unwrap(), model);
    }

    #[test]
    fn switch_on_single_neuron_layer_fails() {
        let model = Model::random(3, &[1], 2, 1.0, 0).unwrap();
        let spec = MutationSpec {
            operator: MutationOperator::NeuronSwitch,
            intensity: 1.0,
            target_layer: Some(0),
            seed: 0,
        };
        assert!(matches!(mutate_model(&model, &spec), Err(Error::Mutation(_))));
    }

    #[test]
    fn shapes_are_preserved() {
        let model = Model::random(6, &[5, 4], 3, 1.0, 2).unwrap();
        for (i, op) in MutationOperator::ALL.into_iter().enumerate() {
            let spec = MutationSpec { operator: op, intensity: 2.0, target_layer: None, seed: i as u64 };
            let m = mutate_model(&model, &spec).unwrap();
            for (a, b) in m.layers().iter().zip(model.layers()) {
                assert_eq!((a.in_width(), a.out_width(), a.activation()), (b.in_width(), b.out_width(), b.activation()));
            }
        }
    }

    #[test]
    fn fairness_score_counts_agreement() {
        use crate::nn::{Activation, DenseLayer};
        // class 1 iff x0 > 100
        let l = DenseLayer::new(1, 2, vec![0.0, 1.0], vec![0.0, -100.0], Activation::Softmax).unwrap();
        let model = Model::new(vec![l]).unwrap();
        let mut pairs: Vec<SamplePair> = (0..8)
            .map(|i| SamplePair::new(vec![i as f64], vec![i as f64 + 1.0], 0, 0, 1).unwrap())
            .collect();
        pairs.push(SamplePair::new(vec![50.0], vec![150.0], 0, 0, 1).unwrap());
        pairs.push(SamplePair::new(vec![150.0], vec![50.0], 0, 0, 1).unwrap());
        assert!((fairness_score(&model, &pairs).unwrap() - 0.8).abs() < 1e-15);
        pairs.reverse();
        assert!((fairness_score(&model, &pairs).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(fairness_score(&model, &[]), Err(Error::Data(_))));
    }
}
