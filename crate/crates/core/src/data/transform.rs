use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{AttrTag, SamplePair};
use crate::error::{Error, Result};

/// Attribute-domain transform `T_{from→to}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    /// Counterparts supplied externally, looked up verbatim.
    ExplicitPairing(PairRegistry),
    /// Overwrites a fixed set of coordinates with per-attribute constants.
    PatchFlip(PatchFlip),
}

impl Transform {
    pub fn apply(&self, x: &[f64], from: AttrTag, to: AttrTag) -> Result<Vec<f64>> {
        if from == to {
            return Err(Error::Attribute(format!(
                "source and target tag are both {from}"
            )));
        }
        match self {
            Transform::PatchFlip(p) => p.apply(x, from, to),
            Transform::ExplicitPairing(r) => r.lookup(x, from, to),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchFlip {
    patch_indices: Vec<usize>,
    value_map: BTreeMap<AttrTag, Vec<f64>>,
    dim: usize,
}

impl PatchFlip {
    /// `value_map[tag][i]` is the fill value for `patch_indices[i]`.
    pub fn new(
        patch_indices: Vec<usize>,
        value_map: BTreeMap<AttrTag, Vec<f64>>,
        dim: usize,
    ) -> Result<Self> {
        if patch_indices.is_empty() {
            return Err(Error::Construction("patch has no coordinates".into()));
        }
        if let Some(&i) = patch_indices.iter().find(|&&i| i >= dim) {
            return Err(Error::Construction(format!(
                "patch index {i} outside input dimension {dim}"
            )));
        }
        let unique: BTreeSet<_> = patch_indices.iter().collect();
        if unique.len() != patch_indices.len() {
            return Err(Error::Construction("patch indices repeat".into()));
        }
        if value_map.len() < 2 {
            return Err(Error::Construction(
                "value map must cover at least two attribute values".into(),
            ));
        }
        for (tag, fill) in &value_map {
            if fill.len() != patch_indices.len() {
                return Err(Error::Construction(format!(
                    "fill for tag {tag} has {} values, patch has {}",
                    fill.len(),
                    patch_indices.len()
                )));
            }
        }
        Ok(Self {
            patch_indices,
            value_map,
            dim,
        })
    }

    pub fn patch_indices(&self) -> &[usize] {
        &self.patch_indices
    }

    pub fn value_map(&self) -> &BTreeMap<AttrTag, Vec<f64>> {
        &self.value_map
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], from: AttrTag, to: AttrTag) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::InputShape {
                expected: self.dim,
                actual: x.len(),
            });
        }
        if !self.value_map.contains_key(&from) {
            return Err(Error::Attribute(format!("unknown source tag {from}")));
        }
        let fill = self
            .value_map
            .get(&to)
            .ok_or_else(|| Error::Attribute(format!("unknown target tag {to}")))?;
        let mut out = x.to_vec();
        for (&i, &v) in self.patch_indices.iter().zip(fill) {
            out[i] = v;
        }
        Ok(out)
    }
}

fn key(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Registered `(x, tag) ↔ (x′, tag′)` counterparts, usable in both directions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairRegistry {
    map: HashMap<(Vec<u64>, AttrTag, AttrTag), Vec<f64>>,
    tags: BTreeSet<AttrTag>,
}

impl PairRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a SamplePair>) -> Self {
        let mut registry = Self::new();
        for p in pairs {
            registry.register(&p.x, p.source_attr, &p.x_prime, p.target_attr);
        }
        registry
    }

    pub fn register(&mut self, x: &[f64], from: AttrTag, x_prime: &[f64], to: AttrTag) {
        self.tags.insert(from);
        self.tags.insert(to);
        self.map.insert((key(x), from, to), x_prime.to_vec());
        self.map.insert((key(x_prime), to, from), x.to_vec());
    }

    pub fn len(&self) -> usize {
        self.map.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn lookup(&self, x: &[f64], from: AttrTag, to: AttrTag) -> Result<Vec<f64>> {
        for tag in [from, to] {
            if !self.tags.contains(&tag) {
                return Err(Error::Attribute(format!("unknown tag {tag}")));
            }
        }
        self.map
            .get(&(key(x), from, to))
            .cloned()
            .ok_or(Error::MissingPair)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flip() -> PatchFlip {
        PatchFlip::new(
            vec![0, 1],
            BTreeMap::from([(0, vec![0.0, 0.0]), (1, vec![255.0, 255.0])]),
            4,
        )
        .unwrap()
    }

    #[test]
    fn constant_patch_substitution() {
        let t = Transform::PatchFlip(flip());
        assert_eq!(
            t.apply(&[0.0, 0.0, 9.0, 9.0], 0, 1).unwrap(),
            vec![255.0, 255.0, 9.0, 9.0]
        );
    }

    #[test]
    fn explicit_pairing_returns_stored_counterpart() {
        let mut r = PairRegistry::new();
        r.register(&[1.0, 2.0], 0, &[3.5, -1.0], 1);
        let t = Transform::ExplicitPairing(r);
        assert_eq!(t.apply(&[1.0, 2.0], 0, 1).unwrap(), vec![3.5, -1.0]);
        assert_eq!(t.apply(&[3.5, -1.0], 1, 0).unwrap(), vec![1.0, 2.0]);
        assert!(matches!(t.apply(&[9.0, 9.0], 0, 1), Err(Error::MissingPair)));
        assert!(matches!(t.apply(&[1.0, 2.0], 0, 5), Err(Error::Attribute(_))));
    }

    #[test]
    fn unknown_tag_and_equal_tags() {
        let t = Transform::PatchFlip(flip());
        assert!(matches!(t.apply(&[0.0; 4], 0, 3), Err(Error::Attribute(_))));
        assert!(matches!(t.apply(&[0.0; 4], 1, 1), Err(Error::Attribute(_))));
    }

    #[test]
    fn patch_outside_dimension() {
        let err = PatchFlip::new(vec![4], BTreeMap::from([(0, vec![0.0]), (1, vec![1.0])]), 4);
        assert!(matches!(err, Err(Error::Construction(_))));
    }

    proptest! {
        #[test]
        fn only_patch_coordinates_change(x in prop::collection::vec(0.0f64..255.0, 4)) {
            let t = Transform::PatchFlip(flip());
            let y = t.apply(&x, 0, 1).unwrap();
            prop_assert_eq!(&y[2..], &x[2..]);
        }

        #[test]
        fn double_flip_is_identity(rest in prop::collection::vec(0.0f64..255.0, 2), a in 0u32..2) {
            let t = Transform::PatchFlip(flip());
            let fill = flip().value_map()[&a].clone();
            let x: Vec<f64> = fill.iter().chain(&rest).copied().collect();
            let there = t.apply(&x, a, 1 - a).unwrap();
            prop_assert_eq!(t.apply(&there, 1 - a, a).unwrap(), x);
        }
    }
}
