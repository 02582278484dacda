//! Linear one-class SVM trained by minibatch SGD on the standard
//! objective 0.5*||w||^2 - rho + 1/(nu*n) * sum max(0, rho - w.x).
//! Anomaly score is rho - w.x (distance behind the hyperplane).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::WindowedDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOcsvmModel {
    pub weights: Vec<f64>,
    pub rho: f64,
    pub nu: f64,
}

const BATCH: usize = 32;

impl LinearOcsvmModel {
    pub fn fit(
        train: &WindowedDataset,
        nu: f64,
        learning_rate: f64,
        epochs: usize,
        seed: u64,
    ) -> Result<LinearOcsvmModel> {
        let n = train.n_windows();
        let d = train.flattened_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = vec![0.0f64; d];
        let mut rho = 0.0f64;
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..epochs {
            // seeded shuffle per epoch
            for k in (1..n).rev() {
                let pick = rng.gen_range(0..=k);
                order.swap(k, pick);
            }
            for chunk in order.chunks(BATCH) {
                let m = chunk.len() as f64;
                let mut grad_w: Vec<f64> = w.clone();
                let mut grad_rho = -1.0;
                for &i in chunk {
                    let x = train.window(i);
                    let margin: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum();
                    if margin < rho {
                        // hinge active: d/dw = -x/(nu*m), d/drho = 1/(nu*m)
                        for (g, xi) in grad_w.iter_mut().zip(x) {
                            *g -= xi / (nu * m);
                        }
                        grad_rho += 1.0 / (nu * m);
                    }
                }
                for (wi, g) in w.iter_mut().zip(&grad_w) {
                    *wi -= learning_rate * g;
                }
                rho -= learning_rate * grad_rho;
            }
        }
        if w.iter().any(|v| !v.is_finite()) || !rho.is_finite() {
            return Err(Error::Numeric("ocsvm training diverged".into()));
        }
        Ok(LinearOcsvmModel {
            weights: w,
            rho,
            nu,
        })
    }

    pub fn score(&self, test: &WindowedDataset) -> Result<Vec<f64>> {
        if test.flattened_dim() != self.weights.len() {
            return Err(Error::Shape(format!(
                "ocsvm fitted on dim {}, got {}",
                self.weights.len(),
                test.flattened_dim()
            )));
        }
        Ok((0..test.n_windows())
            .map(|i| {
                let x = test.window(i);
                let proj: f64 = self.weights.iter().zip(x).map(|(wi, xi)| wi * xi).sum();
                self.rho - proj
            })
            .collect())
    }
}
