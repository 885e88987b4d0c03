//! Fairness-related neuron selection.
//!
//! For every neuron the absolute post-activation difference between `x` and
//! `x′` is collected over all pairs, split by whether the model's predictions
//! agree (group 0) or differ (group 1). A neuron is fairness-related when the
//! Kruskal-Wallis H of the two groups exceeds the χ²(1) critical value.

use std::fmt::Write as _;

use serde::Serialize;

use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::par;
use crate::stats::{chi_square_critical, kruskal_wallis_h};

/// Groups smaller than this get a low-power flag on the map.
pub const LOW_POWER_GROUP_SIZE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffSample {
    pub neuron: NeuronId,
    pub diff: f64,
    pub outcome_group: u8,
}

/// Activation differences for every neuron over a set of pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffTable {
    /// `diffs[layer][neuron][pair]`
    diffs: Vec<Vec<Vec<f64>>>,
    groups: Vec<u8>,
}

impl DiffTable {
    /// Builds a table from raw per-neuron diffs. Each neuron list must have
    /// one entry per element of `groups`.
    pub fn from_raw(diffs: Vec<Vec<Vec<f64>>>, groups: Vec<u8>) -> Result<Self> {
        for layer in &diffs {
            for neuron in layer {
                if neuron.len() != groups.len() {
                    return Err(Error::Shape(neuron.len(), groups.len()));
                }
                if neuron.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                    return Err(Error::Data("diffs must be finite and non-negative".into()));
                }
            }
        }
        if groups.iter().any(|g| *g > 1) {
            return Err(Error::Data("outcome group must be 0 or 1".into()));
        }
        Ok(Self { diffs, groups })
    }

    pub fn layer_count(&self) -> usize {
        self.diffs.len()
    }

    pub fn layer_width(&self, layer: usize) -> usize {
        self.diffs[layer].len()
    }

    pub fn pair_count(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[u8] {
        &self.groups
    }

    pub fn diffs(&self, neuron: NeuronId) -> &[f64] {
        &self.diffs[neuron.layer][neuron.index]
    }

    pub fn samples(&self, neuron: NeuronId) -> impl Iterator<Item = DiffSample> + '_ {
        self.diffs(neuron)
            .iter()
            .zip(&self.groups)
            .map(move |(&diff, &outcome_group)| DiffSample {
                neuron,
                diff,
                outcome_group,
            })
    }

    /// Sizes of the agreeing and disagreeing groups.
    pub fn group_sizes(&self) -> [usize; 2] {
        let unfair = self.groups.iter().filter(|g| **g == 1).count();
        [self.groups.len() - unfair, unfair]
    }

    fn split(&self, neuron: NeuronId) -> (Vec<f64>, Vec<f64>) {
        let mut g0 = Vec::new();
        let mut g1 = Vec::new();
        for s in self.samples(neuron) {
            if s.outcome_group == 0 {
                g0.push(s.diff);
            } else {
                g1.push(s.diff);
            }
        }
        (g0, g1)
    }
}

/// `|v(x) − v(x′)|` on every neuron of every layer, plus the prediction
/// agreement of each pair.
pub fn collect_diffs(model: &Model, pairs: &[SamplePair]) -> Result<DiffTable> {
    if pairs.is_empty() {
        return Err(Error::Data("no pairs to collect differences from".into()));
    }
    let per_pair = par::try_map(pairs, |_, p| {
        let a = model.forward_with_trace(&p.x)?;
        let b = model.forward_with_trace(&p.x_prime)?;
        let diffs: Vec<Vec<f64>> = a
            .layers
            .iter()
            .zip(&b.layers)
            .map(|(la, lb)| la.post.iter().zip(&lb.post).map(|(u, v)| (u - v).abs()).collect())
            .collect();
        Ok::<_, Error>((diffs, u8::from(a.predicted_class != b.predicted_class)))
    })?;
    let mut diffs: Vec<Vec<Vec<f64>>> = model
        .layers()
        .iter()
        .map(|l| vec![Vec::with_capacity(pairs.len()); l.out_width()])
        .collect();
    let mut groups = Vec::with_capacity(pairs.len());
    for (pair_diffs, group) in per_pair {
        for (layer, values) in pair_diffs.into_iter().enumerate() {
            for (k, d) in values.into_iter().enumerate() {
                diffs[layer][k].push(d);
            }
        }
        groups.push(group);
    }
    Ok(DiffTable { diffs, groups })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeuronStat {
    pub neuron: NeuronId,
    /// `None` when every diff of the neuron is identical.
    pub h_statistic: Option<f64>,
    pub significant: bool,
    /// 1-based position in the layer's descending-H order.
    pub rank_in_layer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerSelection {
    pub layer: usize,
    /// Indexed by neuron.
    pub stats: Vec<NeuronStat>,
    /// Significant neurons, descending H (NF_j).
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessNeuronMap {
    pub alpha: f64,
    pub critical_value: f64,
    pub top_k: usize,
    pub group_sizes: [usize; 2],
    pub layers: Vec<LayerSelection>,
}

impl FairnessNeuronMap {
    /// NF_j: fairness-related neurons of `layer`, strongest first.
    pub fn selected(&self, layer: usize) -> &[usize] {
        self.layers.get(layer).map_or(&[], |l| l.selected.as_slice())
    }

    /// The first `top_k` entries of NF_j.
    pub fn top(&self, layer: usize) -> &[usize] {
        let nf = self.selected(layer);
        &nf[..nf.len().min(self.top_k)]
    }

    pub fn significant_count(&self, layer: usize) -> usize {
        self.selected(layer).len()
    }

    pub fn low_power(&self) -> bool {
        self.group_sizes.iter().any(|&n| n < LOW_POWER_GROUP_SIZE)
    }

    /// Neuron map export: `layer,neuron,H,significant,rank_in_layer`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,neuron,H,significant,rank_in_layer\n");
        for layer in &self.layers {
            for s in &layer.stats {
                let h = s.h_statistic.map_or_else(|| "NA".to_string(), |h| format!("{h}"));
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    s.neuron.layer, s.neuron.index, h, s.significant, s.rank_in_layer
                );
            }
        }
        out
    }

    /// Identity of the selection a coverage profile was built against.
    pub fn fingerprint(&self) -> Vec<Vec<usize>> {
        self.layers.iter().map(|l| l.selected.clone()).collect()
    }
}

fn validate(alpha: f64, top_k: usize) -> Result<f64> {
    if top_k == 0 {
        return Err(Error::Parameter("topK must be at least 1".into()));
    }
    chi_square_critical(alpha)
}

/// Runs the H-test on every neuron of a precomputed table.
pub fn select_from_diffs(table: &DiffTable, alpha: f64, top_k: usize) -> Result<FairnessNeuronMap> {
    let critical_value = validate(alpha, top_k)?;
    let group_sizes = table.group_sizes();
    if group_sizes.contains(&0) {
        return Err(Error::DegeneratePartition(format!(
            "{} agreeing and {} disagreeing pairs; both groups are required",
            group_sizes[0], group_sizes[1]
        )));
    }
    let neurons: Vec<NeuronId> = (0..table.layer_count())
        .flat_map(|layer| (0..table.layer_width(layer)).map(move |index| NeuronId { layer, index }))
        .collect();
    let hs = par::try_map(&neurons, |_, &n| {
        let (g0, g1) = table.split(n);
        match kruskal_wallis_h(&g0, &g1) {
            Ok(h) => Ok(Some(h)),
            Err(Error::UndefinedStatistic(_)) => Ok(None),
            Err(e) => Err(e),
        }
    })?;

    let mut layers = Vec::with_capacity(table.layer_count());
    let mut it = hs.into_iter();
    for layer in 0..table.layer_count() {
        let width = table.layer_width(layer);
        let layer_h: Vec<Option<f64>> = it.by_ref().take(width).collect();
        let mut order: Vec<usize> = (0..width).collect();
        order.sort_by(|&a, &b| {
            let ha = layer_h[a].unwrap_or(f64::NEG_INFINITY);
            let hb = layer_h[b].unwrap_or(f64::NEG_INFINITY);
            hb.total_cmp(&ha).then(a.cmp(&b))
        });
        let mut stats: Vec<NeuronStat> = layer_h
            .iter()
            .enumerate()
            .map(|(index, &h)| NeuronStat {
                neuron: NeuronId { layer, index },
                h_statistic: h,
                significant: h.is_some_and(|h| h > critical_value),
                rank_in_layer: 0,
            })
            .collect();
        for (pos, &k) in order.iter().enumerate() {
            stats[k].rank_in_layer = pos + 1;
        }
        let selected = order.into_iter().filter(|&k| stats[k].significant).collect();
        layers.push(LayerSelection { layer, stats, selected });
    }
    Ok(FairnessNeuronMap {
        alpha,
        critical_value,
        top_k,
        group_sizes,
        layers,
    })
}

/// Collects diffs over `pairs` and selects the fairness-related neurons.
pub fn select_fairness_neurons(
    model: &Model,
    pairs: &[SamplePair],
    alpha: f64,
    top_k: usize,
) -> Result<FairnessNeuronMap> {
    validate(alpha, top_k)?;
    if pairs.is_empty() {
        return Err(Error::DegeneratePartition("no pairs".into()));
    }
    let table = collect_diffs(model, pairs)?;
    select_from_diffs(&table, alpha, top_k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_model() -> Model {
        // one hidden identity neuron reading x, then a threshold at 2.5
        let hidden = DenseLayer::new(1, 1, vec![1.0], vec![0.0], Activation::Identity).unwrap();
        let out =
            DenseLayer::new(1, 2, vec![-1.0, 1.0], vec![2.5, -2.5], Activation::Softmax).unwrap();
        Model::new(vec![hidden, out]).unwrap()
    }

    fn pair(a: f64, b: f64) -> SamplePair {
        SamplePair::new(vec![a], vec![b], 0, 0, 1).unwrap()
    }

    #[test]
    fn direct_subtraction() {
        let table = collect_diffs(&identity_model(), &[pair(1.0, 3.0), pair(2.0, 2.0)]).unwrap();
        let n = NeuronId { layer: 0, index: 0 };
        assert_eq!(table.diffs(n), &[2.0, 0.0]);
        assert_eq!(table.groups(), &[1, 0]);
    }

    #[test]
    fn identical_inputs_have_zero_diffs() {
        let model = Model::random(4, &[5, 3], 2, 1.0, 1).unwrap();
        let p = SamplePair::new(vec![0.5; 4], vec![0.5; 4], 0, 0, 1).unwrap();
        let table = collect_diffs(&model, &[p]).unwrap();
        assert!(table.diffs.iter().flatten().flatten().all(|d| *d == 0.0));
        assert_eq!(table.groups(), &[0]);
    }

    fn two_group_table(g0: Vec<f64>, g1: Vec<f64>) -> DiffTable {
        let groups: Vec<u8> = std::iter::repeat_n(0, g0.len())
            .chain(std::iter::repeat_n(1, g1.len()))
            .collect();
        let diffs = g0.into_iter().chain(g1).collect();
        DiffTable::from_raw(vec![vec![diffs]], groups).unwrap()
    }

    #[test]
    fn disjoint_supports_are_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g0 = (0..50).map(|_| rng.random_range(0.0..1.0)).collect();
        let g1 = (0..50).map(|_| rng.random_range(10.0..11.0)).collect();
        let map = select_from_diffs(&two_group_table(g0, g1), 0.05, 10).unwrap();
        assert_eq!(map.selected(0), &[0]);
    }

    #[test]
    fn single_outcome_group_is_degenerate() {
        let table = DiffTable::from_raw(vec![vec![vec![0.1, 0.2, 0.3]]], vec![0, 0, 0]).unwrap();
        assert!(matches!(
            select_from_diffs(&table, 0.05, 1),
            Err(Error::DegeneratePartition(_))
        ));
    }

    #[test]
    fn constant_neuron_is_not_significant() {
        let table = two_group_table(vec![0.0; 10], vec![0.0; 10]);
        let map = select_from_diffs(&table, 0.05, 1).unwrap();
        assert_eq!(map.layers[0].stats[0].h_statistic, None);
        assert!(map.selected(0).is_empty());
        assert!(map.to_csv().contains("0,0,NA,false,1"));
    }

    #[test]
    fn stricter_alpha_nests() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layer: Vec<Vec<f64>> = (0..12)
            .map(|k| {
                (0..80)
                    .map(|i| rng.random_range(0.0..1.0) + if i >= 40 { k as f64 * 0.05 } else { 0.0 })
                    .collect()
            })
            .collect();
        let groups = (0..80).map(|i| u8::from(i >= 40)).collect();
        let table = DiffTable::from_raw(vec![layer], groups).unwrap();
        let loose = select_from_diffs(&table, 0.05, 3).unwrap();
        let strict = select_from_diffs(&table, 0.001, 3).unwrap();
        assert!(strict.selected(0).iter().all(|k| loose.selected(0).contains(k)));
        assert!(strict.selected(0).len() <= loose.selected(0).len());
        assert_eq!(loose.top(0), &loose.selected(0)[..loose.selected(0).len().min(3)]);
    }

    #[test]
    fn zero_top_k_rejected() {
        let table = two_group_table(vec![0.0, 1.0], vec![2.0]);
        assert!(matches!(select_from_diffs(&table, 0.05, 0), Err(Error::Parameter(_))));
    }
}
