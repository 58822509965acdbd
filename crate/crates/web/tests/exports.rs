use prot_fpl_web::{adversary_rows, probability_curve, trading_rows};
use serde_json::Value;

#[test]
fn curve_rows_are_distributions() {
    let c = probability_curve(&[0.0, 1.0, -0.5], 1.0, 50_000, 1).unwrap();
    assert_eq!(c.probabilities.len(), 3);
    for k in 0..c.eps.len() {
        let s: f64 = c.probabilities.iter().map(|row| row[k]).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
    // Large eps follows the leader (expert 3), small eps is near uniform.
    assert!(c.probabilities[2].last().unwrap() > &0.99);
    assert!((c.probabilities[0][0] - 1.0 / 3.0).abs() < 0.02);
    assert!(probability_curve(&[], 1.0, 10, 0).is_err());
}

#[test]
fn adversary_json() {
    let v: Value = serde_json::from_str(&adversary_rows(0.5, 12).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 12);
    for r in rows {
        assert!(r["normalized_regret"].as_f64().unwrap() >= v["stated_bound"].as_f64().unwrap());
    }
    assert!(adversary_rows(1.5, 3).is_err());
}

#[test]
fn trading_json() {
    let v: Value = serde_json::from_str(&trading_rows(0.8, 128, 3, 0.01, 1.0).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 129);
    assert_eq!(rows[0]["learner_cum"], 0.0);
    assert!(trading_rows(1.2, 128, 3, 0.01, 1.0).is_err());
}
