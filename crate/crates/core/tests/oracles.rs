//! Library results checked against independent reference computations.

use fairtest_core::nn::{input_gradient, loss, Model};
use fairtest_core::stats::{chi_square_critical, kruskal_wallis_h, midranks, pearson};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// H from rank sums, `12/(N(N+1)) Σ R²/n − 3(N+1)`, divided by the tie
/// correction `1 − Σ(t³−t)/(N³−N)`. Ranks are found by counting.
fn reference_h(g0: &[f64], g1: &[f64]) -> f64 {
    let all: Vec<f64> = g0.iter().chain(g1).copied().collect();
    let n = all.len() as f64;
    let rank = |v: f64| {
        let below = all.iter().filter(|&&w| w < v).count() as f64;
        let tied = all.iter().filter(|&&w| w == v).count() as f64;
        below + (tied + 1.0) / 2.0
    };
    let r0: f64 = g0.iter().map(|&v| rank(v)).sum();
    let r1: f64 = g1.iter().map(|&v| rank(v)).sum();
    let raw = 12.0 / (n * (n + 1.0)) * (r0 * r0 / g0.len() as f64 + r1 * r1 / g1.len() as f64)
        - 3.0 * (n + 1.0);
    let ties: f64 = all
        .iter()
        .map(|&v| {
            let t = all.iter().filter(|&&w| w == v).count() as f64;
            // each tie group is visited t times
            (t * t * t - t) / t
        })
        .sum();
    raw / (1.0 - ties / (n * n * n - n))
}

proptest! {
    #[test]
    fn h_matches_rank_sum_reference(
        g0 in prop::collection::vec(0u8..6, 2..25),
        g1 in prop::collection::vec(0u8..6, 2..25),
    ) {
        let g0: Vec<f64> = g0.into_iter().map(f64::from).collect();
        let g1: Vec<f64> = g1.into_iter().map(f64::from).collect();
        let first = g0[0];
        prop_assume!(g0.iter().chain(&g1).any(|&v| v != first));
        let got = kruskal_wallis_h(&g0, &g1).unwrap();
        prop_assert!((got - reference_h(&g0, &g1)).abs() <= 1e-9);
    }

    #[test]
    fn midranks_sum_to_triangular_number(values in prop::collection::vec(0u8..5, 1..40)) {
        let values: Vec<f64> = values.into_iter().map(f64::from).collect();
        let n = values.len() as f64;
        let sum: f64 = midranks(&values).iter().sum();
        prop_assert!((sum - n * (n + 1.0) / 2.0).abs() <= 1e-9);
    }

    #[test]
    fn input_gradient_matches_central_differences(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(2..7);
        let classes = rng.random_range(2..4);
        let model = Model::random(dim, &[rng.random_range(2..6)], classes, 1.0, seed).unwrap();
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y = rng.random_range(0..classes);
        let g = input_gradient(&model, &x, y).unwrap();
        let h = 1e-4;
        for i in 0..dim {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (loss(&model, &up, y).unwrap() - loss(&model, &down, y).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-3, "coordinate {i}: {fd} vs {}", g[i]);
        }
    }
}

/// Chi-square(1) upper quantile by bisection on a Simpson-rule CDF.
fn quantile_by_quadrature(alpha: f64) -> f64 {
    let cdf = |x: f64| {
        let upper = x.sqrt();
        let n = 20_000;
        let h = upper / n as f64;
        let f = |t: f64| (-t * t / 2.0).exp();
        let inner: f64 = (1..n).map(|i| f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
        (2.0 / std::f64::consts::PI).sqrt() * (f(0.0) + f(upper) + inner) * h / 3.0
    };
    let (mut lo, mut hi) = (0.0, 60.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < 1.0 - alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn critical_values_match_quadrature() {
    for alpha in [0.001, 0.01, 0.05, 0.1, 0.5] {
        let got = chi_square_critical(alpha).unwrap();
        let want = quantile_by_quadrature(alpha);
        assert!((got - want).abs() <= 1e-6, "alpha {alpha}: {got} vs {want}");
    }
    assert!((chi_square_critical(0.05).unwrap() - 3.8415).abs() <= 1e-3);
}

#[test]
fn hand_evaluated_statistics() {
    assert!((kruskal_wallis_h(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap() - 3.8571).abs() <= 1e-3);
    assert_eq!(kruskal_wallis_h(&[1.0, 4.0, 5.0, 8.0], &[2.0, 3.0, 6.0, 7.0]).unwrap(), 0.0);
    assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() <= 1e-12);
}
