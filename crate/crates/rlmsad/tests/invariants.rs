//! Randomized invariants over the numeric building blocks.

use proptest::prelude::*;

use rlmsad::confidence::{distance_to_threshold, prediction_consensus};
use rlmsad::dataio::{FeatureScaler, TimeSeries, SCALER_CLAMP_HI, SCALER_CLAMP_LO};
use rlmsad::detectors::threshold_scores;
use rlmsad::evalharness::{confusion, metrics};
use rlmsad::mdpenv::RewardConfig;

fn series(rows: Vec<Vec<f64>>) -> TimeSeries {
    let d = rows[0].len();
    let names = (0..d).map(|j| format!("f{j}")).collect();
    TimeSeries::new(rows.concat(), rows.len(), d, None, names).unwrap()
}

proptest! {
    #[test]
    fn threshold_flags_match_contamination(
        scores in proptest::collection::vec(-1e3..1e3f64, 20..200),
        contamination in 0.01..0.45f64,
    ) {
        // distinct scores: perturb duplicates deterministically
        let mut scores = scores;
        scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for i in 1..scores.len() {
            if scores[i] <= scores[i - 1] {
                scores[i] = scores[i - 1] + 1e-6;
            }
        }
        let n = scores.len();
        let out = threshold_scores(&scores, contamination).unwrap();
        let flagged: usize = out.labels.iter().map(|&l| l as usize).sum();
        let expected = (contamination * n as f64).floor() as usize;
        prop_assert!(flagged.abs_diff(expected) <= 1);
        for (s, &l) in scores.iter().zip(&out.labels) {
            prop_assert_eq!(l == 1, *s > out.threshold_raw);
        }
    }

    #[test]
    fn scaler_maps_training_data_into_clamp_range(
        rows in proptest::collection::vec(
            proptest::collection::vec(-1e6..1e6f64, 3), 2..50),
    ) {
        let s = series(rows);
        let sc = FeatureScaler::fit(&s).unwrap();
        let scaled = sc.apply(&s).unwrap();
        for &v in scaled.values() {
            prop_assert!((SCALER_CLAMP_LO..=SCALER_CLAMP_HI).contains(&v));
        }
    }

    #[test]
    fn metric_ranges_and_f1_bounds(
        pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..300),
    ) {
        let (pred, truth): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let c = confusion(&pred, &truth).unwrap();
        prop_assert_eq!(c.tp + c.tn + c.fp + c.fn_, pred.len());
        let m = metrics(&c);
        for v in [m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        // F1 is the harmonic mean: bounded by the two components
        prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-12);
        prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
    }

    #[test]
    fn reward_bounded_by_table_extremes(
        pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..200),
        tp in 0.1..5.0f64, tn in 0.01..0.09f64, fp in 0.1..5.0f64, fn_ in 0.1..5.0f64,
    ) {
        let r = RewardConfig { tp, tn, fp, fn_ };
        for (p, t) in pairs {
            let v = r.reward(p, t);
            prop_assert!(v <= tp.max(tn));
            prop_assert!(v >= -fp.max(fn_));
        }
    }

    #[test]
    fn confidence_scores_stay_in_range(
        score in -10.0..10.0f64,
        thr in -10.0..10.0f64,
        labels in proptest::collection::vec(0u8..2, 1..8),
        mine in 0u8..2,
    ) {
        let lo = score.min(thr);
        let hi = score.max(thr) + 1.0;
        let dt = distance_to_threshold(score, thr, hi, lo).unwrap();
        prop_assert!((-1.0..=1.0).contains(&dt));
        let pc = prediction_consensus(&labels, mine).unwrap();
        prop_assert!((0.0..=1.0).contains(&pc));
    }
}
