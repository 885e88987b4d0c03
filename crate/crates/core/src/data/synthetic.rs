use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AttrTag, Dataset, PatchFlip, Sample, Transform};
use crate::error::{Error, Result};

/// Layout of the synthetic attribute patch and class clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Coordinates that carry the sensitive attribute.
    pub patch_indices: Vec<usize>,
    /// `(name, fill)` per attribute value; tag `i` is the `i`-th entry.
    pub attributes: Vec<(String, f64)>,
    /// Probability that a sample's attribute tag equals `label mod n_attributes`.
    /// `1/n_attributes` makes attribute and label independent.
    pub attribute_bias: f64,
    /// Class means are drawn per coordinate from `128 ± center_spread`.
    pub center_spread: f64,
    /// Per-coordinate Gaussian noise around the class mean.
    pub noise_std: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            patch_indices: vec![0, 1, 2, 3],
            attributes: vec![("A".into(), 0.0), ("B".into(), 255.0)],
            attribute_bias: 0.5,
            center_spread: 24.0,
            noise_std: 40.0,
        }
    }
}

/// Gaussian class clusters on the non-patch coordinates; the attribute is
/// written only into the patch. Values are in pixel units, clipped to
/// `[0, 255]` and rounded to `f32` so the binary container stores them exactly.
pub fn generate_synthetic(
    seed: u64,
    n_per_class: usize,
    class_count: usize,
    dim: usize,
    spec: &SyntheticSpec,
) -> Result<(Dataset, Transform)> {
    if n_per_class == 0 {
        return Err(Error::Construction("n_per_class must be at least 1".into()));
    }
    if class_count < 2 {
        return Err(Error::Construction("need at least two classes".into()));
    }
    if dim <= spec.patch_indices.len() {
        return Err(Error::Construction(format!(
            "patch of {} coordinates leaves no free coordinates in dimension {dim}",
            spec.patch_indices.len()
        )));
    }
    if spec.attributes.len() < 2 {
        return Err(Error::Construction("need at least two attribute values".into()));
    }
    if !(0.0..=1.0).contains(&spec.attribute_bias) {
        return Err(Error::Construction("attribute_bias must lie in [0, 1]".into()));
    }
    if !(spec.noise_std > 0.0 && spec.center_spread >= 0.0) {
        return Err(Error::Construction("noise_std must be positive".into()));
    }
    let value_map: BTreeMap<AttrTag, Vec<f64>> = spec
        .attributes
        .iter()
        .enumerate()
        .map(|(t, (_, fill))| (t as AttrTag, vec![*fill; spec.patch_indices.len()]))
        .collect();
    let flip = PatchFlip::new(spec.patch_indices.clone(), value_map, dim)?;
    let names: BTreeMap<AttrTag, String> = spec
        .attributes
        .iter()
        .enumerate()
        .map(|(t, (name, _))| (t as AttrTag, name.clone()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free: Vec<usize> = (0..dim)
        .filter(|i| !spec.patch_indices.contains(i))
        .collect();
    let means: Vec<Vec<f64>> = (0..class_count)
        .map(|_| {
            free.iter()
                .map(|_| 128.0 + rng.random_range(-1.0..=1.0) * spec.center_spread)
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise_std).expect("positive std");
    let n_attr = spec.attributes.len();

    let mut samples = Vec::with_capacity(n_per_class * class_count);
    for i in 0..n_per_class * class_count {
        let label = i % class_count;
        let preferred = label % n_attr;
        let attr = if rng.random_bool(spec.attribute_bias) {
            preferred
        } else {
            // uniform over the remaining values
            let other = rng.random_range(0..n_attr - 1);
            if other >= preferred {
                other + 1
            } else {
                other
            }
        } as AttrTag;
        let mut x = vec![0.0; dim];
        for (slot, &c) in free.iter().enumerate() {
            let v = (means[label][slot] + noise.sample(&mut rng)).clamp(0.0, 255.0);
            x[c] = v as f32 as f64;
        }
        let fill = &flip.value_map()[&attr];
        for (&c, &v) in spec.patch_indices.iter().zip(fill) {
            x[c] = v as f32 as f64;
        }
        samples.push(Sample { x, label, attr });
    }
    let dataset = Dataset::new(samples, dim, class_count, names)?;
    Ok((dataset, Transform::PatchFlip(flip)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::pair_all;

    #[test]
    fn same_seed_same_dataset() {
        let spec = SyntheticSpec::default();
        let (a, _) = generate_synthetic(7, 20, 2, 16, &spec).unwrap();
        let (b, _) = generate_synthetic(7, 20, 2, 16, &spec).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate_synthetic(8, 20, 2, 16, &spec).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_per_class_is_construction_error() {
        assert!(matches!(
            generate_synthetic(0, 0, 2, 16, &SyntheticSpec::default()),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn patch_covering_everything_is_rejected() {
        assert!(matches!(
            generate_synthetic(0, 5, 2, 4, &SyntheticSpec::default()),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn pairing_is_reproducible() {
        let spec = SyntheticSpec::default();
        let (d, t) = generate_synthetic(11, 30, 2, 12, &spec).unwrap();
        let first = pair_all(&d, &t).unwrap();
        let (d2, t2) = generate_synthetic(11, 30, 2, 12, &spec).unwrap();
        assert_eq!(first, pair_all(&d2, &t2).unwrap());
    }

    #[test]
    fn attribute_lives_only_in_patch() {
        let spec = SyntheticSpec::default();
        let (d, _) = generate_synthetic(3, 10, 2, 10, &spec).unwrap();
        for s in d.samples() {
            let fill = spec.attributes[s.attr as usize].1;
            assert!(spec.patch_indices.iter().all(|&i| s.x[i] == fill));
            assert!(s.x.iter().all(|v| (0.0..=255.0).contains(v)));
        }
    }
}
