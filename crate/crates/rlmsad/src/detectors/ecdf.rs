//! Shared empirical-CDF tables behind ECOD and COPOD. Both aggregate
//! per-dimension negative log tail probabilities; ECOD takes the max of the
//! left / right / two-sided aggregations, COPOD picks the tail per feature
//! by the sign of its training skewness.

use serde::{Deserialize, Serialize};

use crate::dataio::WindowedDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfTables {
    /// Per-feature sorted training values.
    pub sorted: Vec<Vec<f64>>,
    /// Per-feature sample-skewness sign (+1.0 or -1.0).
    pub skew_sign: Vec<f64>,
}

/// Tail probability count/n, floored at 1/(n+1) so log stays finite for
/// points outside the training range.
fn tail_prob(count: usize, n: usize) -> f64 {
    (count as f64 / n as f64).max(1.0 / (n as f64 + 1.0))
}

/// #{v <= x} on a sorted slice.
fn count_le(sorted: &[f64], x: f64) -> usize {
    sorted.partition_point(|&v| v <= x)
}

/// #{v >= x} on a sorted slice.
fn count_ge(sorted: &[f64], x: f64) -> usize {
    sorted.len() - sorted.partition_point(|&v| v < x)
}

fn sample_skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

impl EcdfTables {
    pub fn fit(train: &WindowedDataset) -> Result<EcdfTables> {
        let d = train.flattened_dim();
        let n = train.n_windows();
        let mut sorted = Vec::with_capacity(d);
        let mut skew_sign = Vec::with_capacity(d);
        for j in 0..d {
            let mut col: Vec<f64> = (0..n).map(|i| train.window(i)[j]).collect();
            skew_sign.push(if sample_skewness(&col) < 0.0 { -1.0 } else { 1.0 });
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            sorted.push(col);
        }
        Ok(EcdfTables { sorted, skew_sign })
    }

    fn check_dim(&self, test: &WindowedDataset) -> Result<()> {
        if test.flattened_dim() != self.sorted.len() {
            return Err(Error::Shape(format!(
                "ecdf tables fitted on dim {}, got {}",
                self.sorted.len(),
                test.flattened_dim()
            )));
        }
        Ok(())
    }

    pub fn left_tail(&self, j: usize, x: f64) -> f64 {
        let col = &self.sorted[j];
        tail_prob(count_le(col, x), col.len())
    }

    pub fn right_tail(&self, j: usize, x: f64) -> f64 {
        let col = &self.sorted[j];
        tail_prob(count_ge(col, x), col.len())
    }

    /// max over {left, right, two-sided} aggregations of sum_j -ln(tail).
    pub fn score_ecod(&self, test: &WindowedDataset) -> Result<Vec<f64>> {
        self.check_dim(test)?;
        Ok((0..test.n_windows())
            .map(|i| {
                let x = test.window(i);
                let mut o_left = 0.0;
                let mut o_right = 0.0;
                let mut o_two = 0.0;
                for (j, &v) in x.iter().enumerate() {
                    let l = self.left_tail(j, v);
                    let r = self.right_tail(j, v);
                    o_left += -l.ln();
                    o_right += -r.ln();
                    o_two += -(2.0 * l.min(r)).min(1.0).ln();
                }
                o_left.max(o_right).max(o_two)
            })
            .collect())
    }

    /// Skewness-corrected sum_j -ln(tail): left tail for left-skewed
    /// features, right tail otherwise.
    pub fn score_copod(&self, test: &WindowedDataset) -> Result<Vec<f64>> {
        self.check_dim(test)?;
        Ok((0..test.n_windows())
            .map(|i| {
                let x = test.window(i);
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let p = if self.skew_sign[j] < 0.0 {
                            self.left_tail(j, v)
                        } else {
                            self.right_tail(j, v)
                        };
                        -p.ln()
                    })
                    .sum()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::tests::unit_windows;

    #[test]
    fn fit_stores_sorted_tables() {
        let data = unit_windows(&[&[3.0], &[1.0], &[4.0], &[2.0], &[5.0], &[6.0], &[7.0], &[8.0]]);
        let tables = EcdfTables::fit(&data).unwrap();
        assert_eq!(tables.sorted[0], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn right_tail_beyond_range_is_floor() {
        // train 1..100, probe 101: right tail = 1/101
        let rows: Vec<Vec<f64>> = (1..=100).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let tables = EcdfTables::fit(&unit_windows(&refs)).unwrap();
        let p = tables.right_tail(0, 101.0);
        assert!((p - 1.0 / 101.0).abs() < 1e-15);
        let probe = unit_windows(&[&[101.0]]);
        let score = tables.score_ecod(&probe).unwrap()[0];
        assert!((score - (101.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicated_training_rows_leave_scores_unchanged() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 17) as f64, (i % 5) as f64]).collect();
        let mut doubled = rows.clone();
        doubled.extend(rows.clone());
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let refs2: Vec<&[f64]> = doubled.iter().map(|r| r.as_slice()).collect();
        let t1 = EcdfTables::fit(&unit_windows(&refs)).unwrap();
        let t2 = EcdfTables::fit(&unit_windows(&refs2)).unwrap();
        // probes inside the training range
        let probe = unit_windows(&[&[3.0, 2.0], &[16.0, 0.0], &[8.5, 4.0]]);
        for (a, b) in t1
            .score_ecod(&probe)
            .unwrap()
            .iter()
            .zip(t2.score_ecod(&probe).unwrap())
        {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in t1
            .score_copod(&probe)
            .unwrap()
            .iter()
            .zip(t2.score_copod(&probe).unwrap())
        {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn ecod_score_is_u_shaped_over_the_range() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.1]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let tables = EcdfTables::fit(&unit_windows(&refs)).unwrap();
        let sweep: Vec<Vec<f64>> = (0..100).map(|k| vec![k as f64 * 0.05]).collect();
        let sweep_refs: Vec<&[f64]> = sweep.iter().map(|r| r.as_slice()).collect();
        let scores = tables.score_ecod(&unit_windows(&sweep_refs)).unwrap();
        let min_pos = scores
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        for k in 1..=min_pos {
            assert!(scores[k] <= scores[k - 1] + 1e-12);
        }
        for k in min_pos + 1..scores.len() {
            assert!(scores[k] >= scores[k - 1] - 1e-12);
        }
    }

    #[test]
    fn copod_uses_skew_sign() {
        // right-skewed feature: a few large values
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![if i % 10 == 0 { 10.0 } else { 1.0 + (i % 3) as f64 * 0.1 }])
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let tables = EcdfTables::fit(&unit_windows(&refs)).unwrap();
        assert_eq!(tables.skew_sign[0], 1.0);
        // with a right tail chosen, bigger values must not score lower
        let probe = unit_windows(&[&[1.0], &[9.0]]);
        let scores = tables.score_copod(&probe).unwrap();
        assert!(scores[1] > scores[0]);
    }

    #[test]
    fn score_rejects_dim_mismatch() {
        let data = unit_windows(&[&[1.0], &[2.0], &[3.0], &[4.0], &[5.0], &[6.0], &[7.0], &[8.0]]);
        let tables = EcdfTables::fit(&data).unwrap();
        let wide = unit_windows(&[&[1.0, 2.0]]);
        assert!(tables.score_ecod(&wide).is_err());
    }
}
