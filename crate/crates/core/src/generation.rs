//! Unfair-pair generation from fair seed pairs.
//!
//! Both elements of a pair receive the same perturbation `p` every
//! iteration; generation stops as soon as the model's predictions for the
//! two perturbed inputs differ or the iteration budget is spent.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::nn::{input_gradient, Model};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Random direction per coordinate.
    #[serde(rename = "RG")]
    Random,
    /// Shared sign of the loss gradient.
    #[serde(rename = "GG")]
    Gradient,
    /// Gaussian noise injection.
    #[serde(rename = "GI")]
    Gaussian,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::Gradient, Strategy::Gaussian];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "RG",
            Strategy::Gradient => "GG",
            Strategy::Gaussian => "GI",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::Configuration(format!("unknown strategy {s:?}; valid strategies are RG, GG, GI"))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub strategy: Strategy,
    /// Pixel units.
    pub step_size: f64,
    pub max_iterations: usize,
    pub gaussian_mu: f64,
    pub gaussian_sigma: f64,
    pub clip_range: [f64; 2],
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Gradient,
            step_size: 5.0,
            max_iterations: 10,
            gaussian_mu: 0.0,
            gaussian_sigma: 7.0,
            clip_range: [0.0, 255.0],
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Parameter("step_size must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Parameter("max_iterations must be at least 1".into()));
        }
        if !(self.gaussian_sigma > 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(Error::Parameter("gaussian_sigma must be positive".into()));
        }
        if !self.gaussian_mu.is_finite() {
            return Err(Error::Parameter("gaussian_mu must be finite".into()));
        }
        let [low, high] = self.clip_range;
        if !(low < high) {
            return Err(Error::Parameter("clip_range must satisfy low < high".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenResult {
    #[serde(skip)]
    pub seed_pair: SamplePair,
    #[serde(skip)]
    pub final_pair: SamplePair,
    pub success: bool,
    pub iterations_used: usize,
    /// Accumulated perturbation applied to both elements.
    #[serde(skip)]
    pub perturbation: Vec<f64>,
    /// Gradient generation found no coordinate with agreeing signs.
    pub stalled: bool,
}

/// Each coordinate moves by `−step`, `0` or `+step` with equal probability.
pub fn rg_step<R: Rng + ?Sized>(dim: usize, step_size: f64, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| (rng.random_range(0..3) as f64 - 1.0) * step_size)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientStep {
    pub perturbation: Vec<f64>,
    pub stalled: bool,
}

/// Perturbation from two gradient sign vectors: `step·sg_i` where both signs
/// agree and are nonzero, `0` elsewhere.
pub fn sign_agreement_step(sg: &[f64], sg_prime: &[f64], step_size: f64) -> GradientStep {
    let perturbation: Vec<f64> = sg
        .iter()
        .zip(sg_prime)
        .map(|(&a, &b)| {
            let (sa, sb) = (sign(a), sign(b));
            if sa != 0.0 && sa == sb {
                sa * step_size
            } else {
                0.0
            }
        })
        .collect();
    let stalled = perturbation.iter().all(|p| *p == 0.0);
    GradientStep { perturbation, stalled }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Moves along the loss-gradient sign where `x` and `x′` agree.
pub fn gg_step(model: &Model, x: &[f64], x_prime: &[f64], y: usize, step_size: f64) -> Result<GradientStep> {
    let g = input_gradient(model, x, y)?;
    let g_prime = input_gradient(model, x_prime, y)?;
    Ok(sign_agreement_step(&g, &g_prime, step_size))
}

/// I.i.d. draws from `N(mu, sigma²)`.
pub fn gi_step<R: Rng + ?Sized>(dim: usize, mu: f64, sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    let normal = Normal::new(mu, sigma)
        .map_err(|e| Error::Parameter(format!("gaussian parameters: {e}")))?;
    if !(sigma > 0.0) {
        return Err(Error::Parameter("sigma must be positive".into()));
    }
    Ok((0..dim).map(|_| normal.sample(rng)).collect())
}

/// Per-pair generator seed; serial and parallel runs draw identical streams.
pub fn pair_seed(base: u64, index: usize) -> u64 {
    base ^ index as u64
}

fn generate_one(model: &Model, seed: &SamplePair, index: usize, config: &GenConfig) -> Result<GenResult> {
    let dim = model.input_dim();
    if seed.dim() != dim {
        return Err(Error::InputShape {
            expected: dim,
            actual: seed.dim(),
        });
    }
    let [low, high] = config.clip_range;
    let (mut x, mut x_prime) = (seed.x.clone(), seed.x_prime.clone());
    let mut accumulated = vec![0.0; dim];
    let mut success = model.predict(&x)? != model.predict(&x_prime)?;
    let mut iterations_used = 0;
    let mut stalled = false;
    let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(config.seed, index));

    while !success && iterations_used < config.max_iterations {
        let step = match config.strategy {
            Strategy::Random => rg_step(dim, config.step_size, &mut rng),
            Strategy::Gaussian => gi_step(dim, config.gaussian_mu, config.gaussian_sigma, &mut rng)?,
            Strategy::Gradient => {
                let g = gg_step(model, &x, &x_prime, seed.label, config.step_size)?;
                if g.stalled {
                    stalled = true;
                    break;
                }
                g.perturbation
            }
        };
        for i in 0..dim {
            // keep one shared perturbation that leaves both inputs in range
            let lo = low - seed.x[i].min(seed.x_prime[i]);
            let hi = high - seed.x[i].max(seed.x_prime[i]);
            accumulated[i] = (accumulated[i] + step[i]).min(hi).max(lo);
            x[i] = seed.x[i] + accumulated[i];
            x_prime[i] = seed.x_prime[i] + accumulated[i];
        }
        iterations_used += 1;
        success = model.predict(&x)? != model.predict(&x_prime)?;
    }

    let final_pair = SamplePair {
        x,
        x_prime,
        ..seed.clone()
    };
    Ok(GenResult {
        seed_pair: seed.clone(),
        final_pair,
        success,
        iterations_used,
        perturbation: accumulated,
        stalled,
    })
}

/// Runs the configured strategy on every seed pair. Seeds that are already
/// unfair come back as successes with zero iterations.
pub fn generate_unfair(model: &Model, seeds: &[SamplePair], config: &GenConfig) -> Result<Vec<GenResult>> {
    config.validate()?;
    let [low, high] = config.clip_range;
    if let Some(i) = seeds
        .iter()
        .position(|p| p.x.iter().chain(&p.x_prime).any(|v| *v < low || *v > high))
    {
        return Err(Error::Data(format!("seed pair {i} lies outside clip_range")));
    }
    par::try_map(seeds, |i, s| generate_one(model, s, i, config))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub strategy: Strategy,
    pub seeds: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub stalled: usize,
    /// `histogram[i]` = successes that needed `i` iterations.
    pub iterations_histogram: Vec<usize>,
}

pub fn summarize(strategy: Strategy, max_iterations: usize, results: &[GenResult]) -> GenSummary {
    let mut histogram = vec![0; max_iterations + 1];
    let mut successes = 0;
    for r in results.iter().filter(|r| r.success) {
        successes += 1;
        histogram[r.iterations_used.min(max_iterations)] += 1;
    }
    GenSummary {
        strategy,
        seeds: results.len(),
        successes,
        success_rate: if results.is_empty() {
            0.0
        } else {
            successes as f64 / results.len() as f64
        },
        stalled: results.iter().filter(|r| r.stalled).count(),
        iterations_histogram: histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer};

    #[test]
    fn sign_agreement() {
        let g = sign_agreement_step(&[0.3, -2.0, 1.0], &[0.1, 4.0, -1.0], 5.0);
        assert_eq!(g.perturbation, vec![5.0, 0.0, 0.0]);
        assert!(!g.stalled);
        let full = sign_agreement_step(&[1.0, -1.0], &[2.0, -0.5], 5.0);
        assert_eq!(full.perturbation, vec![5.0, -5.0]);
        let none = sign_agreement_step(&[1.0, -1.0], &[-1.0, 1.0], 5.0);
        assert_eq!(none.perturbation, vec![0.0, 0.0]);
        assert!(none.stalled);
        let zeros = sign_agreement_step(&[0.0, 0.0], &[0.0, 0.0], 5.0);
        assert!(zeros.stalled);
    }

    #[test]
    fn rg_values_and_determinism() {
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        let p = rg_step(500, 5.0, &mut a);
        assert!(p.iter().all(|v| [-5.0, 0.0, 5.0].contains(v)));
        assert_eq!(p, rg_step(500, 5.0, &mut b));
    }

    #[test]
    fn gi_rejects_bad_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(gi_step(3, 0.0, 0.0, &mut rng).is_err());
        assert!(gi_step(3, 0.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn strategy_names() {
        assert_eq!("gg".parse::<Strategy>().unwrap(), Strategy::Gradient);
        assert!(matches!("GX".parse::<Strategy>(), Err(Error::Configuration(_))));
    }

    fn constant_model() -> Model {
        let l = DenseLayer::new(3, 2, vec![0.0; 6], vec![0.2, 0.1], Activation::Softmax).unwrap();
        Model::new(vec![l]).unwrap()
    }

    #[test]
    fn constant_predictor_never_succeeds() {
        let seeds = vec![SamplePair::new(vec![10.0; 3], vec![200.0; 3], 0, 0, 1).unwrap()];
        for strategy in Strategy::ALL {
            let cfg = GenConfig { strategy, ..GenConfig::default() };
            let out = generate_unfair(&constant_model(), &seeds, &cfg).unwrap();
            assert!(!out[0].success);
        }
    }

    #[test]
    fn unfair_seed_short_circuits() {
        // predicts class 1 iff x0 > 100
        let l = DenseLayer::new(1, 2, vec![0.0, 1.0], vec![0.0, -100.0], Activation::Softmax).unwrap();
        let model = Model::new(vec![l]).unwrap();
        let seeds = vec![SamplePair::new(vec![10.0], vec![200.0], 0, 0, 1).unwrap()];
        let out = generate_unfair(&model, &seeds, &GenConfig::default()).unwrap();
        assert!(out[0].success);
        assert_eq!(out[0].iterations_used, 0);
        assert_eq!(out[0].perturbation, vec![0.0]);
        assert_eq!(out[0].final_pair, seeds[0]);
    }

    #[test]
    fn invalid_config() {
        let cfg = GenConfig { clip_range: [5.0, 5.0], ..GenConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Parameter(_))));
        let cfg = GenConfig { max_iterations: 0, ..GenConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Parameter(_))));
    }
}
