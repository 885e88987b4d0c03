use fairtest_demo::{
    bin_values, compute_pair_metrics, coverage_bins, h_test, pair_metrics, parse_numbers, run_h_test,
};
use serde_json::Value;

#[test]
fn parses_mixed_separators() {
    assert_eq!(parse_numbers("1, 2;3\n4.5  -1e1").unwrap(), vec![1.0, 2.0, 3.0, 4.5, -10.0]);
    assert!(parse_numbers("1, two").unwrap_err().contains("two"));
    assert!(parse_numbers("inf").is_err());
    assert!(parse_numbers("").unwrap().is_empty());
}

#[test]
fn h_test_hand_case() {
    let r = run_h_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], 0.05).unwrap();
    assert!((r.h - 3.857142857142857).abs() < 1e-12);
    assert!((r.critical_value - 3.8415).abs() < 1e-3);
    assert!(r.significant);
    let json: Value = serde_json::from_str(&h_test("1 4 5 8", "2 3 6 7", 0.05).unwrap()).unwrap();
    assert_eq!(json["h"], 0.0);
    assert_eq!(json["significant"], false);
    assert!(h_test("1 1", "1 1", 0.05).is_err());
    assert!(h_test("1 2", "3 4", 1.5).is_err());
}

#[test]
fn pair_metric_examples() {
    let m = compute_pair_metrics(&[5.0, 2.0, 0.0, 4.0], &[3.0, 0.0, 1.0, 4.0]).unwrap();
    // patterns 1101 and 1011 share two active units out of four
    assert_eq!(m.tanimoto, 0.5);
    assert_eq!(m.absolute, vec![Some(2.0), None, None, Some(0.0)]);
    assert_eq!(m.relative, vec![Some(5.0 / 3.0), None, None, Some(1.0)]);
    assert!(m.cosine.is_some() && m.spearman.is_some());

    let json: Value = serde_json::from_str(&pair_metrics("0 0", "0 0").unwrap()).unwrap();
    assert_eq!(json["tanimoto"], 1.0);
    assert!(json["cosine"].is_null());
    assert!(pair_metrics("1 2", "1").is_err());
}

#[test]
fn coverage_binning() {
    let b = bin_values(&[0.05, 0.55, 0.56, 1.2], 0.0, 1.0, 10).unwrap();
    assert_eq!(b.hit, 2);
    assert_eq!(b.ratio, 0.2);
    assert_eq!(b.counts[5], 2);
    assert_eq!(b.out_of_range, 1);
    let json: Value = serde_json::from_str(&coverage_bins("0.3 0.9", 0.0, 1.0, 1).unwrap()).unwrap();
    assert_eq!(json["ratio"], 1.0);
    assert!(coverage_bins("1", 0.0, 1.0, 0).is_err());
    assert!(coverage_bins("1", 1.0, 1.0, 4).is_err());
}
