//! Rank statistics shared by neuron selection and the adequacy metrics.

use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// 1-based ranks of `values` in ascending order; tied values share the
/// mean of the ranks they span (midranks).
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Kruskal-Wallis H for two groups, computed on pooled midranks.
///
/// Evaluated as the ratio of between-group rank variance to the total rank
/// variance with `N − 1` degrees of freedom. On tie-free data the total rank
/// variance is `N(N+1)/12` and this is the textbook rank-sum form; with ties
/// it equals that form divided by `1 − Σ(t³−t)/(N³−N)`.
pub fn kruskal_wallis_h(group0: &[f64], group1: &[f64]) -> Result<f64> {
    if group0.is_empty() || group1.is_empty() {
        return Err(Error::DegeneratePartition(format!(
            "group sizes {} and {}",
            group0.len(),
            group1.len()
        )));
    }
    let n = group0.len() + group1.len();
    if n < 3 {
        return Err(Error::UndefinedStatistic(format!(
            "H needs at least 3 observations, got {n}"
        )));
    }
    if group0.iter().chain(group1).any(|v| !v.is_finite()) {
        return Err(Error::UndefinedStatistic("non-finite observation".into()));
    }
    let pooled: Vec<f64> = group0.iter().chain(group1).copied().collect();
    let ranks = midranks(&pooled);
    let mean = (n as f64 + 1.0) / 2.0;
    let total: f64 = ranks.iter().map(|r| (r - mean).powi(2)).sum();
    if total == 0.0 {
        return Err(Error::UndefinedStatistic("all observations are identical".into()));
    }
    let (r0, r1) = ranks.split_at(group0.len());
    let between: f64 = [r0, r1]
        .iter()
        .map(|g| {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            g.len() as f64 * (m - mean).powi(2)
        })
        .sum();
    Ok((n as f64 - 1.0) * between / total)
}

/// Upper-`alpha` critical value of the χ² distribution with one degree of
/// freedom, i.e. `(Φ⁻¹(1 − α/2))²`.
pub fn chi_square_critical(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha {alpha} must lie in (0, 1)")));
    }
    // P(|Z| > z) = erfc(z/√2) = α
    let root = erfc_inv(alpha);
    Ok(2.0 * root * root)
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedStatistic("correlation needs two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedStatistic("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(midranks(&[0.0, 0.0, 0.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn separated_groups() {
        let h = kruskal_wallis_h(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((h - 27.0 / 7.0).abs() < 1e-12);
        assert!((h - 3.8571).abs() < 1e-3);
    }

    #[test]
    fn nearly_balanced_rank_sums() {
        let h = kruskal_wallis_h(&[1.0, 4.0, 6.0], &[2.0, 3.0, 7.0]).unwrap();
        assert!((h - 1.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn equal_rank_sums_give_exact_zero() {
        assert_eq!(
            kruskal_wallis_h(&[1.0, 4.0, 5.0, 8.0], &[2.0, 3.0, 6.0, 7.0]).unwrap(),
            0.0
        );
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            kruskal_wallis_h(&[], &[1.0, 2.0, 3.0]),
            Err(Error::DegeneratePartition(_))
        ));
        assert!(matches!(
            kruskal_wallis_h(&[2.0, 2.0], &[2.0]),
            Err(Error::UndefinedStatistic(_))
        ));
    }

    #[test]
    fn critical_values() {
        assert!((chi_square_critical(0.05).unwrap() - 3.8415).abs() < 1e-3);
        assert!((chi_square_critical(0.5).unwrap() - 0.4549).abs() < 1e-3);
        assert!(chi_square_critical(0.001).unwrap() > chi_square_critical(0.05).unwrap());
        for bad in [0.0, 1.0, -0.2, f64::NAN] {
            assert!(matches!(chi_square_critical(bad), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn pearson_cases() {
        let xs = [1.0, 2.0, 3.0];
        let affine: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &affine).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&xs, &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            pearson(&xs, &[2.0, 2.0, 2.0]),
            Err(Error::UndefinedStatistic(_))
        ));
    }

    fn closed_form(g0: &[f64], g1: &[f64]) -> f64 {
        let pooled: Vec<f64> = g0.iter().chain(g1).copied().collect();
        let ranks = midranks(&pooled);
        let n = pooled.len() as f64;
        let (r0, r1) = ranks.split_at(g0.len());
        let s0: f64 = r0.iter().sum();
        let s1: f64 = r1.iter().sum();
        12.0 / (n * (n + 1.0)) * (s0 * s0 / g0.len() as f64 + s1 * s1 / g1.len() as f64)
            - 3.0 * (n + 1.0)
    }

    proptest! {
        #[test]
        fn tie_free_matches_rank_sum_form(
            mut values in prop::collection::hash_set(-1_000_000i64..1_000_000, 3..60),
            split in 1usize..59,
        ) {
            let values: Vec<f64> = values.drain().map(|v| v as f64 / 7.0).collect();
            let cut = split.min(values.len() - 1);
            let (g0, g1) = values.split_at(cut);
            let h = kruskal_wallis_h(g0, g1).unwrap();
            prop_assert!((h - closed_form(g0, g1)).abs() < 1e-9);
        }

        #[test]
        fn invariant_under_monotone_transform(
            g0 in prop::collection::vec(0.0f64..10.0, 2..30),
            g1 in prop::collection::vec(0.0f64..10.0, 2..30),
        ) {
            let f = |v: &f64| v.powi(3) + 1.0;
            let h = kruskal_wallis_h(&g0, &g1);
            let t0: Vec<f64> = g0.iter().map(f).collect();
            let t1: Vec<f64> = g1.iter().map(f).collect();
            if let Ok(h) = h {
                prop_assert!((h - kruskal_wallis_h(&t0, &t1).unwrap()).abs() < 1e-9);
                prop_assert!(h >= 0.0);
            }
        }

        #[test]
        fn invariant_under_within_group_shuffle(
            g0 in prop::collection::vec(0u8..6, 2..30),
            g1 in prop::collection::vec(0u8..6, 2..30),
        ) {
            let a: Vec<f64> = g0.iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = g1.iter().map(|&v| v as f64).collect();
            let mut ra = a.clone();
            ra.reverse();
            let mut rb = b.clone();
            rb.rotate_left(1);
            match (kruskal_wallis_h(&a, &b), kruskal_wallis_h(&ra, &rb)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-9),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }
}
