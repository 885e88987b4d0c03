//! WebAssembly bindings for the static demo page. Each export takes numbers
//! as the user typed them and returns a JSON document, or an error message
//! the page shows inline.

use fairtest_core::coverage::bin_index;
use fairtest_core::metrics::{cosine, neuron_distance, spearman, tanimoto, DistanceMode};
use fairtest_core::stats::{chi_square_critical, kruskal_wallis_h};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Parses comma, semicolon or whitespace separated numbers.
pub fn parse_numbers(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("{t:?} is not a number"))
        })
        .collect()
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct HTest {
    pub h: f64,
    pub critical_value: f64,
    pub significant: bool,
    pub sizes: [usize; 2],
}

pub fn run_h_test(group0: &[f64], group1: &[f64], alpha: f64) -> Result<HTest, String> {
    let h = kruskal_wallis_h(group0, group1).map_err(|e| e.to_string())?;
    let critical_value = chi_square_critical(alpha).map_err(|e| e.to_string())?;
    Ok(HTest {
        h,
        critical_value,
        significant: h > critical_value,
        sizes: [group0.len(), group1.len()],
    })
}

/// Kruskal-Wallis H of two groups against the chi-square(1) critical value.
#[wasm_bindgen]
pub fn h_test(group0: &str, group1: &str, alpha: f64) -> Result<String, String> {
    to_json(&run_h_test(&parse_numbers(group0)?, &parse_numbers(group1)?, alpha)?)
}

#[derive(Debug, Serialize)]
pub struct PairMetrics {
    pub tanimoto: f64,
    /// `None` where the metric is undefined, e.g. a zero vector.
    pub cosine: Option<f64>,
    pub spearman: Option<f64>,
    /// Per neuron; `None` unless both values are active.
    pub absolute: Vec<Option<f64>>,
    pub relative: Vec<Option<f64>>,
}

/// Every metric on two post-activation vectors; a neuron counts as active
/// when its value is positive.
pub fn compute_pair_metrics(v: &[f64], v_prime: &[f64]) -> Result<PairMetrics, String> {
    if v.len() != v_prime.len() {
        return Err(format!("vectors have {} and {} entries", v.len(), v_prime.len()));
    }
    if v.is_empty() {
        return Err("vectors are empty".into());
    }
    let pattern = |x: &[f64]| x.iter().map(|&a| a > 0.0).collect::<Vec<_>>();
    let active = |a: f64| (a > 0.0).then_some(a);
    let distances = |mode| {
        v.iter()
            .zip(v_prime)
            .map(|(&a, &b)| neuron_distance(active(a), active(b), mode))
            .collect()
    };
    Ok(PairMetrics {
        tanimoto: tanimoto(&pattern(v), &pattern(v_prime)).map_err(|e| e.to_string())?,
        cosine: cosine(v, v_prime).ok(),
        spearman: spearman(v, v_prime).ok(),
        absolute: distances(DistanceMode::Absolute),
        relative: distances(DistanceMode::Relative),
    })
}

#[wasm_bindgen]
pub fn pair_metrics(v: &str, v_prime: &str) -> Result<String, String> {
    to_json(&compute_pair_metrics(&parse_numbers(v)?, &parse_numbers(v_prime)?)?)
}

#[derive(Debug, Serialize)]
pub struct Bins {
    pub counts: Vec<usize>,
    pub hit: usize,
    pub ratio: f64,
    pub out_of_range: usize,
}

/// Drops `values` into `bins` equal bins over `[lower, upper]`.
pub fn bin_values(values: &[f64], lower: f64, upper: f64, bins: usize) -> Result<Bins, String> {
    if bins == 0 || bins > 10_000 {
        return Err("bin count must be between 1 and 10000".into());
    }
    if !(lower < upper) {
        return Err("lower bound must be below upper bound".into());
    }
    let mut counts = vec![0; bins];
    let mut out_of_range = 0;
    for &v in values {
        match bin_index(v, lower, upper, bins) {
            Some(b) => counts[b] += 1,
            None => out_of_range += 1,
        }
    }
    let hit = counts.iter().filter(|&&c| c > 0).count();
    Ok(Bins {
        ratio: hit as f64 / bins as f64,
        counts,
        hit,
        out_of_range,
    })
}

#[wasm_bindgen]
pub fn coverage_bins(values: &str, lower: f64, upper: f64, bins: u32) -> Result<String, String> {
    to_json(&bin_values(&parse_numbers(values)?, lower, upper, bins as usize)?)
}
