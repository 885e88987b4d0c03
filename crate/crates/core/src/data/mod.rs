//! Labeled datasets with a sensitive attribute, paired samples, and the
//! transforms that produce a sample's counterpart in another attribute domain.

mod container;
mod synthetic;
mod transform;

pub use container::{read_dataset, read_pairs, write_dataset, write_pairs, PairFile, MAGIC};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use transform::{PairRegistry, PatchFlip, Transform};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::LabeledSample;

/// Integer tag of a sensitive-attribute value.
pub type AttrTag = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: usize,
    pub attr: AttrTag,
}

impl LabeledSample for Sample {
    fn features(&self) -> &[f64] {
        &self.x
    }
    fn label(&self) -> usize {
        self.label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
    class_count: usize,
    attributes: BTreeMap<AttrTag, String>,
}

impl Dataset {
    pub fn new(
        samples: Vec<Sample>,
        dim: usize,
        class_count: usize,
        attributes: BTreeMap<AttrTag, String>,
    ) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != dim {
                return Err(Error::InputShape {
                    expected: dim,
                    actual: s.x.len(),
                });
            }
            if s.label >= class_count {
                return Err(Error::Label {
                    label: s.label,
                    class_count,
                });
            }
            if !attributes.contains_key(&s.attr) {
                return Err(Error::Attribute(format!("sample {i} has tag {}", s.attr)));
            }
        }
        Ok(Self {
            samples,
            dim,
            class_count,
            attributes,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn attributes(&self) -> &BTreeMap<AttrTag, String> {
        &self.attributes
    }

    pub fn tag(&self, name: &str) -> Result<AttrTag> {
        self.attributes
            .iter()
            .find(|(_, n)| n.as_str() == name)
            .map(|(t, _)| *t)
            .ok_or_else(|| Error::Attribute(name.to_string()))
    }

    /// Deterministic shuffled split; the first part holds `round(fraction·n)` samples.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Parameter("split fraction must lie in [0, 1]".into()));
        }
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = (fraction * self.samples.len() as f64).round() as usize;
        let pick = |idx: &[usize]| {
            Dataset::new(
                idx.iter().map(|&i| self.samples[i].clone()).collect(),
                self.dim,
                self.class_count,
                self.attributes.clone(),
            )
        };
        Ok((pick(&order[..cut])?, pick(&order[cut..])?))
    }
}

/// A sample and its counterpart under an attribute transform.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub label: usize,
    pub source_attr: AttrTag,
    pub target_attr: AttrTag,
}

impl SamplePair {
    pub fn new(
        x: Vec<f64>,
        x_prime: Vec<f64>,
        label: usize,
        source_attr: AttrTag,
        target_attr: AttrTag,
    ) -> Result<Self> {
        if x.len() != x_prime.len() {
            return Err(Error::Shape(x.len(), x_prime.len()));
        }
        if source_attr == target_attr {
            return Err(Error::Attribute(format!(
                "source and target tag are both {source_attr}"
            )));
        }
        Ok(Self {
            x,
            x_prime,
            label,
            source_attr,
            target_attr,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Result of pairing a dataset against one target attribute value.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    pub pairs: Vec<SamplePair>,
    /// Samples already in the target domain.
    pub skipped: usize,
}

/// Pairs every sample outside the `target` domain with its transformed
/// counterpart.
pub fn pair_dataset(dataset: &Dataset, transform: &Transform, target: AttrTag) -> Result<Pairing> {
    if !dataset.attributes.contains_key(&target) {
        return Err(Error::Attribute(format!("target tag {target}")));
    }
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for s in &dataset.samples {
        if s.attr == target {
            skipped += 1;
            continue;
        }
        let x_prime = transform.apply(&s.x, s.attr, target)?;
        pairs.push(SamplePair::new(s.x.clone(), x_prime, s.label, s.attr, target)?);
    }
    if pairs.is_empty() {
        return Err(Error::EmptyPairing { skipped });
    }
    Ok(Pairing { pairs, skipped })
}

/// Pairs every sample with each other value of the attribute domain, in
/// sample order. For a binary attribute this flips every sample once.
pub fn pair_all(dataset: &Dataset, transform: &Transform) -> Result<Vec<SamplePair>> {
    let mut pairs = Vec::new();
    for s in &dataset.samples {
        for &target in dataset.attributes.keys() {
            if target == s.attr {
                continue;
            }
            let x_prime = transform.apply(&s.x, s.attr, target)?;
            pairs.push(SamplePair::new(s.x.clone(), x_prime, s.label, s.attr, target)?);
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyPairing {
            skipped: dataset.len(),
        });
    }
    Ok(pairs)
}

#[cfg(test)]
pub(crate) fn binary_attributes() -> BTreeMap<AttrTag, String> {
    BTreeMap::from([(0, "A".to_string()), (1, "B".to_string())])
}
