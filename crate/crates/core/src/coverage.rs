//! Bin coverage of the adequacy metrics.
//!
//! Each metric is collected along a set of dimensions: one per measured
//! layer for the layer-level metrics, one per (layer, top-K neuron) for the
//! distances. Each dimension's value range is split into `Z` equal bins and
//! coverage is the fraction of all `Z·|C|` bins hit by at least one pair.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::metrics::{layer_metric, trace_distance, DistanceMode, LayerSignature, Metric};
use crate::nn::{ActivationTrace, Model};
use crate::par;
use crate::selection::FairnessNeuronMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    /// Layers to measure; empty means the deepest hidden layer.
    pub layers: Vec<usize>,
    pub top_k: usize,
    /// Bin count Z.
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub layer: usize,
    /// Set for neuron-level metrics.
    pub neuron: Option<usize>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRanges {
    pub metric: Metric,
    pub dimensions: Vec<Dimension>,
}

/// A distance dimension left out of `|C|` because training pairs never
/// produced a usable range for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedDimension {
    pub metric: Metric,
    pub layer: usize,
    pub neuron: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeProfile {
    pub bins: usize,
    pub layers: Vec<usize>,
    pub metrics: Vec<MetricRanges>,
    pub dropped: Vec<DroppedDimension>,
    selection: Vec<Vec<usize>>,
}

impl RangeProfile {
    pub fn ranges(&self, metric: Metric) -> Option<&MetricRanges> {
        self.metrics.iter().find(|m| m.metric == metric)
    }
}

fn resolve_layers(model: &Model, layers: &[usize]) -> Result<Vec<usize>> {
    if layers.is_empty() {
        return Ok(vec![model.deepest_hidden()]);
    }
    if let Some(&bad) = layers.iter().find(|&&l| l >= model.layers().len()) {
        return Err(Error::Configuration(format!(
            "layer {bad} does not exist; model has {} layers",
            model.layers().len()
        )));
    }
    let mut out = layers.to_vec();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn distance_mode(metric: Metric) -> Option<DistanceMode> {
    match metric {
        Metric::Absolute => Some(DistanceMode::Absolute),
        Metric::Relative => Some(DistanceMode::Relative),
        _ => None,
    }
}

fn traces(model: &Model, pairs: &[SamplePair]) -> Result<Vec<(ActivationTrace, ActivationTrace)>> {
    par::try_map(pairs, |_, p| {
        Ok((model.forward_with_trace(&p.x)?, model.forward_with_trace(&p.x_prime)?))
    })
}

/// Builds the value ranges for every metric. Layer-level ranges are fixed
/// analytically; each distance dimension's upper bound is the largest value
/// seen on the training pairs (lower bound 0 absolute, 1 relative).
pub fn profile_ranges(
    model: &Model,
    training_pairs: &[SamplePair],
    nf_map: &FairnessNeuronMap,
    config: &ProfileConfig,
) -> Result<RangeProfile> {
    if training_pairs.is_empty() {
        return Err(Error::Data("range profiling needs training pairs".into()));
    }
    if config.bins == 0 {
        return Err(Error::Parameter("bin count Z must be at least 1".into()));
    }
    if config.top_k == 0 {
        return Err(Error::Parameter("topK must be at least 1".into()));
    }
    let layers = resolve_layers(model, &config.layers)?;
    let traces = traces(model, training_pairs)?;

    let mut metrics = Vec::new();
    let mut dropped = Vec::new();
    for metric in Metric::ALL {
        let mut dimensions = Vec::new();
        if let Some((lower, upper)) = metric.layer_range() {
            for &layer in &layers {
                dimensions.push(Dimension { layer, neuron: None, lower, upper });
            }
        } else {
            let mode = distance_mode(metric).expect("distance metric");
            let lower = match mode {
                DistanceMode::Absolute => 0.0,
                DistanceMode::Relative => 1.0,
            };
            for &layer in &layers {
                let nf = nf_map.selected(layer);
                for &neuron in &nf[..nf.len().min(config.top_k)] {
                    let upper = traces
                        .iter()
                        .filter_map(|(a, b)| trace_distance(a, b, layer, neuron, mode))
                        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
                    match upper {
                        Some(upper) if upper > lower => {
                            dimensions.push(Dimension { layer, neuron: Some(neuron), lower, upper })
                        }
                        Some(_) => dropped.push(DroppedDimension {
                            metric,
                            layer,
                            neuron,
                            reason: "zero-width range on training pairs".into(),
                        }),
                        None => dropped.push(DroppedDimension {
                            metric,
                            layer,
                            neuron,
                            reason: "never activated by both elements of a training pair".into(),
                        }),
                    }
                }
            }
        }
        metrics.push(MetricRanges { metric, dimensions });
    }
    Ok(RangeProfile {
        bins: config.bins,
        layers,
        metrics,
        dropped,
        selection: nf_map.fingerprint(),
    })
}

/// Bin of `value` in `[lower, upper]` split into `bins` equal parts; `None`
/// outside the range.
pub fn bin_index(value: f64, lower: f64, upper: f64, bins: usize) -> Option<usize> {
    if !(value >= lower && value <= upper) || upper <= lower {
        return None;
    }
    let z = bins as f64;
    let idx = (z * (value - lower) / (upper - lower)).floor() as usize;
    Some(idx.min(bins - 1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionReport {
    pub layer: usize,
    pub neuron: Option<usize>,
    pub lower: f64,
    pub upper: f64,
    pub hit_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub metric: Metric,
    pub bins: usize,
    pub dimension_count: usize,
    pub hit_bin_count: usize,
    pub ratio: f64,
    pub pairs: usize,
    /// (pair, dimension) values that fell outside the profiled range.
    pub out_of_range_count: usize,
    /// (pair, dimension) values that were undefined.
    pub skipped_count: usize,
    pub dimensions: Vec<DimensionReport>,
    #[serde(skip)]
    pub hit_bins: BTreeSet<(usize, usize)>,
}

/// Incremental coverage for one metric; adding pairs never lowers the ratio.
#[derive(Debug, Clone)]
pub struct CoverageAccumulator {
    metric: Metric,
    bins: usize,
    dimensions: Vec<Dimension>,
    hit: BTreeSet<(usize, usize)>,
    pairs: usize,
    out_of_range: usize,
    skipped: usize,
}

impl CoverageAccumulator {
    pub fn new(profile: &RangeProfile, nf_map: &FairnessNeuronMap, metric: Metric) -> Result<Self> {
        if profile.selection != nf_map.fingerprint() {
            return Err(Error::Configuration(
                "range profile was built against a different neuron selection".into(),
            ));
        }
        let ranges = profile.ranges(metric).ok_or_else(|| {
            Error::Configuration(format!("profile has no ranges for metric {metric}"))
        })?;
        Ok(Self {
            metric,
            bins: profile.bins,
            dimensions: ranges.dimensions.clone(),
            hit: BTreeSet::new(),
            pairs: 0,
            out_of_range: 0,
            skipped: 0,
        })
    }

    /// Value of this metric on each dimension for one traced pair.
    pub fn values(
        &self,
        nf_map: &FairnessNeuronMap,
        a: &ActivationTrace,
        b: &ActivationTrace,
    ) -> Result<Vec<Option<f64>>> {
        self.dimensions
            .iter()
            .map(|d| match (d.neuron, distance_mode(self.metric)) {
                (Some(k), Some(mode)) => Ok(trace_distance(a, b, d.layer, k, mode)),
                _ => {
                    let nf = nf_map.selected(d.layer);
                    let sa = LayerSignature::from_trace(a, d.layer, nf);
                    let sb = LayerSignature::from_trace(b, d.layer, nf);
                    layer_metric(self.metric, &sa, &sb)
                }
            })
            .collect()
    }

    pub fn add_values(&mut self, values: &[Option<f64>]) {
        self.pairs += 1;
        for (i, (v, d)) in values.iter().zip(&self.dimensions).enumerate() {
            match v {
                None => self.skipped += 1,
                Some(v) => match bin_index(*v, d.lower, d.upper, self.bins) {
                    Some(bin) => {
                        self.hit.insert((i, bin));
                    }
                    None => self.out_of_range += 1,
                },
            }
        }
    }

    pub fn add_traced(
        &mut self,
        nf_map: &FairnessNeuronMap,
        a: &ActivationTrace,
        b: &ActivationTrace,
    ) -> Result<()> {
        let values = self.values(nf_map, a, b)?;
        self.add_values(&values);
        Ok(())
    }

    /// Union with another accumulator over the same dimensions.
    pub fn merge(&mut self, other: &CoverageAccumulator) {
        self.hit.extend(other.hit.iter().copied());
        self.pairs += other.pairs;
        self.out_of_range += other.out_of_range;
        self.skipped += other.skipped;
    }

    pub fn ratio(&self) -> f64 {
        let total = self.bins * self.dimensions.len();
        if total == 0 {
            0.0
        } else {
            self.hit.len() as f64 / total as f64
        }
    }

    pub fn report(&self) -> CoverageReport {
        let dimensions = self
            .dimensions
            .iter()
            .enumerate()
            .map(|(i, d)| DimensionReport {
                layer: d.layer,
                neuron: d.neuron,
                lower: d.lower,
                upper: d.upper,
                hit_bins: self.hit.range((i, 0)..(i + 1, 0)).count(),
            })
            .collect();
        CoverageReport {
            metric: self.metric,
            bins: self.bins,
            dimension_count: self.dimensions.len(),
            hit_bin_count: self.hit.len(),
            ratio: self.ratio(),
            pairs: self.pairs,
            out_of_range_count: self.out_of_range,
            skipped_count: self.skipped,
            dimensions,
            hit_bins: self.hit.clone(),
        }
    }
}

/// Coverage of `pairs` under one metric.
pub fn coverage(
    pairs: &[SamplePair],
    model: &Model,
    nf_map: &FairnessNeuronMap,
    profile: &RangeProfile,
    metric: Metric,
) -> Result<CoverageReport> {
    Ok(coverage_all(pairs, model, nf_map, profile, &[metric])?.remove(0))
}

/// Coverage of `pairs` under several metrics, tracing each pair once.
pub fn coverage_all(
    pairs: &[SamplePair],
    model: &Model,
    nf_map: &FairnessNeuronMap,
    profile: &RangeProfile,
    metrics: &[Metric],
) -> Result<Vec<CoverageReport>> {
    let mut accs = metrics
        .iter()
        .map(|&m| CoverageAccumulator::new(profile, nf_map, m))
        .collect::<Result<Vec<_>>>()?;
    for (a, b) in traces(model, pairs)? {
        for acc in &mut accs {
            acc.add_traced(nf_map, &a, &b)?;
        }
    }
    Ok(accs.iter().map(CoverageAccumulator::report).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_counting() {
        assert_eq!(bin_index(0.05, 0.0, 1.0, 10), Some(0));
        assert_eq!(bin_index(0.55, 0.0, 1.0, 10), Some(5));
        assert_eq!(bin_index(1.0, 0.0, 1.0, 10), Some(9));
        assert_eq!(bin_index(1.2, 0.0, 1.4, 10), Some(8));
        assert_eq!(bin_index(1.5, 0.0, 1.4, 10), None);
        assert_eq!(bin_index(-0.1, 0.0, 1.0, 10), None);
        assert_eq!(bin_index(0.7, 0.0, 1.0, 1), Some(0));
        assert_eq!(bin_index(f64::NAN, 0.0, 1.0, 4), None);
    }
}
