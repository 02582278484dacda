//! The two per-timestep confidence scores that describe how trustworthy a
//! base detector's current prediction is.

use crate::error::{Error, Result};

/// (score - threshold) / (max - min). Positive when the score clears the
/// threshold decisively; zero range returns a neutral 0.
pub fn distance_to_threshold(
    score: f64,
    threshold: f64,
    score_max: f64,
    score_min: f64,
) -> Result<f64> {
    for v in [score, threshold, score_max, score_min] {
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite confidence input {v}")));
        }
    }
    let range = score_max - score_min;
    if range <= 0.0 {
        return Ok(0.0);
    }
    Ok((score - threshold) / range)
}

/// Fraction of pool members whose label agrees with the selected detector's
/// label. The selected detector counts itself, so the result is in (0, 1].
pub fn prediction_consensus(labels: &[u8], my_label: u8) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Data("prediction consensus over an empty pool".into()));
    }
    let agree = labels.iter().filter(|&&l| l == my_label).count();
    Ok(agree as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_basic_cases() {
        assert_eq!(distance_to_threshold(0.4, 0.4, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(distance_to_threshold(1.0, 0.0, 1.0, 0.0).unwrap(), 1.0);
        assert!((distance_to_threshold(0.7, 0.4, 1.0, 0.0).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn distance_zero_range_is_neutral() {
        assert_eq!(distance_to_threshold(0.5, 0.5, 0.5, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn distance_rejects_non_finite() {
        assert!(distance_to_threshold(f64::NAN, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn distance_affine_invariance() {
        let cases = [(0.7, 0.4, 1.0, 0.0), (3.0, 2.0, 5.0, 1.0), (-1.0, -2.0, 0.0, -3.0)];
        for (s, t, hi, lo) in cases {
            let base = distance_to_threshold(s, t, hi, lo).unwrap();
            for (a, b) in [(2.0, 1.0), (0.5, -3.0), (10.0, 0.0)] {
                let scaled =
                    distance_to_threshold(a * s + b, a * t + b, a * hi + b, a * lo + b).unwrap();
                assert!((scaled - base).abs() < 1e-12, "{base} vs {scaled}");
            }
        }
    }

    #[test]
    fn consensus_counts_self() {
        // 5 models, 3 share the selected label (self included)
        assert!((prediction_consensus(&[1, 1, 1, 0, 0], 1).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(prediction_consensus(&[0, 0, 0], 0).unwrap(), 1.0);
        assert_eq!(prediction_consensus(&[1, 0], 1).unwrap(), 0.5);
    }

    #[test]
    fn consensus_at_least_one_over_m() {
        for m in 1..6 {
            let mut labels = vec![0u8; m];
            labels[0] = 1;
            let c = prediction_consensus(&labels, 1).unwrap();
            assert!(c >= 1.0 / m as f64);
        }
    }

    #[test]
    fn consensus_class_counts_sum_to_pool() {
        let labels = [1u8, 0, 1, 1, 0];
        let ones = prediction_consensus(&labels, 1).unwrap() * labels.len() as f64;
        let zeros = prediction_consensus(&labels, 0).unwrap() * labels.len() as f64;
        assert!((ones + zeros - labels.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn consensus_rejects_empty_pool() {
        assert!(prediction_consensus(&[], 1).is_err());
    }
}
