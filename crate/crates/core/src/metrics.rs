//! Pairwise adequacy metrics over fairness-related neurons.
//!
//! Layer-level metrics compare the activation signatures of `x` and `x′`
//! restricted to NF_j; the neuron distance compares a single neuron.
//! Undefined values (zero-norm or constant vectors, inactive neurons) are
//! reported as errors or `None` and skipped by coverage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ActivationTrace;
use crate::stats::{midranks, pearson};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Tanimoto,
    Cosine,
    Spearman,
    Absolute,
    Relative,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Tanimoto,
        Metric::Cosine,
        Metric::Spearman,
        Metric::Absolute,
        Metric::Relative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Tanimoto => "tanimoto",
            Metric::Cosine => "cosine",
            Metric::Spearman => "spearman",
            Metric::Absolute => "absolute",
            Metric::Relative => "relative",
        }
    }

    /// Computed once per layer rather than once per neuron.
    pub fn is_layer_level(self) -> bool {
        matches!(self, Metric::Tanimoto | Metric::Cosine | Metric::Spearman)
    }

    /// Analytic value range of the layer-level metrics.
    pub fn layer_range(self) -> Option<(f64, f64)> {
        match self {
            Metric::Tanimoto | Metric::Cosine => Some((0.0, 1.0)),
            Metric::Spearman => Some((-1.0, 1.0)),
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                let valid: Vec<&str> = Metric::ALL.iter().map(|m| m.name()).collect();
                Error::Configuration(format!(
                    "unknown metric {s:?}; valid metrics are {}",
                    valid.join(", ")
                ))
            })
    }
}

/// Activation values and activation bits of one layer restricted to NF_j.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSignature {
    pub layer: usize,
    pub values: Vec<f64>,
    pub pattern: Vec<bool>,
}

impl LayerSignature {
    /// A neuron's bit is set when its pre-activation is strictly positive.
    pub fn from_trace(trace: &ActivationTrace, layer: usize, neurons: &[usize]) -> Self {
        let t = &trace.layers[layer];
        Self {
            layer,
            values: neurons.iter().map(|&k| t.post[k]).collect(),
            pattern: neurons.iter().map(|&k| t.pre[k] > 0.0).collect(),
        }
    }
}

/// Common set bits over the union of set bits; two empty patterns score 1.
pub fn tanimoto(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(a.len(), b.len()));
    }
    let both = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let na = a.iter().filter(|x| **x).count();
    let nb = b.iter().filter(|x| **x).count();
    let union = na + nb - both;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(both as f64 / union as f64)
}

pub fn cosine(v: &[f64], w: &[f64]) -> Result<f64> {
    if v.len() != w.len() {
        return Err(Error::Shape(v.len(), w.len()));
    }
    let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nw = w.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nv == 0.0 || nw == 0.0 {
        return Err(Error::UndefinedStatistic("zero-norm activation vector".into()));
    }
    Ok((dot / (nv * nw)).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation: Pearson correlation of midranks, which
/// reduces to `1 − 6Σd²/(n(n²−1))` when neither vector has ties.
pub fn spearman(v: &[f64], w: &[f64]) -> Result<f64> {
    if v.len() != w.len() {
        return Err(Error::Shape(v.len(), w.len()));
    }
    if v.len() < 2 {
        return Err(Error::UndefinedStatistic("rank correlation needs two neurons".into()));
    }
    pearson(&midranks(v), &midranks(w))
        .map_err(|_| Error::UndefinedStatistic("constant activation vector".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    Absolute,
    Relative,
}

/// Distance between one neuron's values for `x` and `x′`. `None` marks an
/// inactive neuron; the distance is only defined when both are active.
pub fn neuron_distance(v: Option<f64>, v_prime: Option<f64>, mode: DistanceMode) -> Option<f64> {
    let (a, b) = (v?, v_prime?);
    match mode {
        DistanceMode::Absolute => Some((a - b).abs()),
        DistanceMode::Relative => {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            (lo > 0.0).then(|| hi / lo)
        }
    }
}

/// Value of a layer-level metric on two signatures; `None` when undefined.
pub fn layer_metric(metric: Metric, a: &LayerSignature, b: &LayerSignature) -> Result<Option<f64>> {
    if a.values.is_empty() {
        return Ok(None);
    }
    let value = match metric {
        Metric::Tanimoto => tanimoto(&a.pattern, &b.pattern),
        Metric::Cosine => cosine(&a.values, &b.values),
        Metric::Spearman => spearman(&a.values, &b.values),
        other => {
            return Err(Error::Configuration(format!(
                "{other} is not a layer-level metric"
            )))
        }
    };
    match value {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedStatistic(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Neuron distance read straight from two traces.
pub fn trace_distance(
    a: &ActivationTrace,
    b: &ActivationTrace,
    layer: usize,
    neuron: usize,
    mode: DistanceMode,
) -> Option<f64> {
    let side = |t: &ActivationTrace| {
        let l = &t.layers[layer];
        (l.pre[neuron] > 0.0).then_some(l.post[neuron])
    };
    neuron_distance(side(a), side(b), mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tanimoto_cases() {
        assert_eq!(tanimoto(&[true, false, true], &[true, false, true]).unwrap(), 1.0);
        let v = tanimoto(&[true, true, false, false], &[true, false, true, false]).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(tanimoto(&[false; 3], &[false; 3]).unwrap(), 1.0);
        assert!(matches!(tanimoto(&[true], &[true, false]), Err(Error::Shape(1, 2))));
    }

    #[test]
    fn cosine_cases() {
        assert!((cosine(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0, 2.0], &[2.0, 4.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::UndefinedStatistic(_))
        ));
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        let v = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((v - 0.8).abs() < 1e-12);
        assert!(matches!(
            spearman(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedStatistic(_))
        ));
    }

    #[test]
    fn distance_cases() {
        assert_eq!(neuron_distance(Some(5.0), Some(3.0), DistanceMode::Absolute), Some(2.0));
        let rel = neuron_distance(Some(5.0), Some(3.0), DistanceMode::Relative).unwrap();
        assert!((rel - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(neuron_distance(Some(4.0), Some(4.0), DistanceMode::Absolute), Some(0.0));
        assert_eq!(neuron_distance(Some(4.0), Some(4.0), DistanceMode::Relative), Some(1.0));
        assert_eq!(neuron_distance(Some(2.0), None, DistanceMode::Absolute), None);
    }

    #[test]
    fn unknown_metric_lists_valid_names() {
        let err = "cosin".parse::<Metric>().unwrap_err().to_string();
        assert!(err.contains("tanimoto, cosine, spearman, absolute, relative"));
        assert_eq!("Cosine".parse::<Metric>().unwrap(), Metric::Cosine);
    }

    fn closed_form(v: &[f64], w: &[f64]) -> f64 {
        let (rv, rw) = (midranks(v), midranks(w));
        let n = v.len() as f64;
        let d2: f64 = rv.iter().zip(&rw).map(|(a, b)| (a - b).powi(2)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    proptest! {
        #[test]
        fn spearman_matches_closed_form_without_ties(
            pairs in prop::collection::hash_map(-100_000i32..100_000, -100_000i32..100_000, 2..40)
        ) {
            let v: Vec<f64> = pairs.keys().map(|&a| a as f64).collect();
            let mut w: Vec<f64> = pairs.values().map(|&b| b as f64).collect();
            // break ties in the second vector
            for (i, x) in w.iter_mut().enumerate() {
                *x += i as f64 * 1e-6;
            }
            prop_assume!(midranks(&w).iter().all(|r| r.fract() == 0.0));
            prop_assert!((spearman(&v, &w).unwrap() - closed_form(&v, &w)).abs() < 1e-9);
        }

        #[test]
        fn bounds_and_symmetry(
            v in prop::collection::vec(0.0f64..5.0, 2..20),
            noise in prop::collection::vec(-2.0f64..2.0, 20),
        ) {
            let w: Vec<f64> = v.iter().zip(&noise).map(|(a, n)| (a + n).max(0.0)).collect();
            let pa: Vec<bool> = v.iter().map(|x| *x > 0.0).collect();
            let pb: Vec<bool> = w.iter().map(|x| *x > 0.0).collect();
            let t = tanimoto(&pa, &pb).unwrap();
            prop_assert!((0.0..=1.0).contains(&t));
            prop_assert_eq!(t, tanimoto(&pb, &pa).unwrap());
            if let Ok(c) = cosine(&v, &w) {
                prop_assert!((0.0..=1.0).contains(&c));
                prop_assert!((c - cosine(&w, &v).unwrap()).abs() < 1e-15);
            }
            if let Ok(s) = spearman(&v, &w) {
                prop_assert!((-1.0..=1.0).contains(&s));
                prop_assert!((s - spearman(&w, &v).unwrap()).abs() < 1e-12);
            }
            for (a, b) in v.iter().zip(&w) {
                let (a, b) = ((*a > 0.0).then_some(*a), (*b > 0.0).then_some(*b));
                if let Some(d) = neuron_distance(a, b, DistanceMode::Absolute) {
                    prop_assert!(d >= 0.0);
                    prop_assert_eq!(Some(d), neuron_distance(b, a, DistanceMode::Absolute));
                }
                if let Some(r) = neuron_distance(a, b, DistanceMode::Relative) {
                    prop_assert!(r >= 1.0);
                    prop_assert_eq!(Some(r), neuron_distance(b, a, DistanceMode::Relative));
                }
            }
        }
    }
}
