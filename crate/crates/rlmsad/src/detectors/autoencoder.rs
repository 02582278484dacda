//! Reconstruction autoencoder over flattened windows; the anomaly score is
//! the mean squared reconstruction error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::WindowedDataset;
use crate::detectors::DetectorHyper;
use crate::error::{Error, Result};
use crate::neuralcore::{DenseNetwork, LossKind, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub network: DenseNetwork,
    pub window_length: usize,
    pub epochs: usize,
}

impl AutoencoderModel {
    pub fn fit(train: &WindowedDataset, hyper: &DetectorHyper, seed: u64) -> Result<AutoencoderModel> {
        let input = train.flattened_dim();
        let hidden = if hyper.ae_hidden > 0 {
            hyper.ae_hidden
        } else {
            (input / 2).max(4)
        };
        let bottleneck = if hyper.ae_bottleneck > 0 {
            hyper.ae_bottleneck
        } else {
            (input / 4).max(2)
        };
        if bottleneck > input / 2 && input >= 4 {
            return Err(Error::Config(format!(
                "autoencoder bottleneck {bottleneck} exceeds half the input dim {input}"
            )));
        }
        let sizes = [input, hidden, bottleneck, hidden, input];
        let mut net = DenseNetwork::init(&sizes, seed)?;
        let mut state = OptimizerState::new(&net);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let n = train.n_windows();
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..hyper.ae_epochs {
            for k in (1..n).rev() {
                let pick = rng.gen_range(0..=k);
                order.swap(k, pick);
            }
            for chunk in order.chunks(hyper.ae_batch) {
                let mut batch = Vec::with_capacity(chunk.len() * input);
                for &i in chunk {
                    batch.extend_from_slice(train.window(i));
                }
                let (_, tape) = net.backward(&batch, chunk.len(), LossKind::Mse, &batch)?;
                net.sgd_step(&tape, hyper.ae_learning_rate, &mut state)?;
            }
        }
        Ok(AutoencoderModel {
            network: net,
            window_length: train.window_length,
            epochs: hyper.ae_epochs,
        })
    }

    pub fn score(&self, test: &WindowedDataset) -> Result<Vec<f64>> {
        let input = self.network.input_dim();
        if test.flattened_dim() != input {
            return Err(Error::Shape(format!(
                "autoencoder fitted on dim {}, got {}",
                input,
                test.flattened_dim()
            )));
        }
        let n = test.n_windows();
        let recon = self.network.forward(&test.windows, n)?;
        Ok((0..n)
            .map(|i| {
                let x = test.window(i);
                let y = &recon[i * input..(i + 1) * input];
                x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / input as f64
            })
            .collect())
    }
}
