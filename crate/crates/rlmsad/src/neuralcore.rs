//! Minimal dense feed-forward network with explicit backpropagation, shared
//! by the reconstruction autoencoder and the Q-learning agent. Hidden layers
//! use relu, the output layer is linear.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NETWORK_FORMAT_VERSION: u32 = 1;

/// Loss applied to the network output during `backward`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Mse,
    Huber { delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNetwork {
    pub sizes: Vec<usize>,
    /// weights[l] has shape sizes[l] x sizes[l+1], row-major.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Per-parameter gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct GradientTape {
    pub d_weights: Vec<Vec<f64>>,
    pub d_biases: Vec<Vec<f64>>,
}

/// First/second moment accumulators for the adaptive optimizer.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    m_weights: Vec<Vec<f64>>,
    v_weights: Vec<Vec<f64>>,
    m_biases: Vec<Vec<f64>>,
    v_biases: Vec<Vec<f64>>,
    step: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

impl OptimizerState {
    pub fn new(net: &DenseNetwork) -> OptimizerState {
        OptimizerState {
            m_weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            step: 0,
        }
    }
}

impl DenseNetwork {
    /// Uniform init with bound sqrt(3)/sqrt(fan_in) (unit-variance-per-input
    /// scaling); biases zero. Deterministic per seed.
    pub fn init(sizes: &[usize], seed: u64) -> Result<DenseNetwork> {
        if sizes.len() < 2 {
            return Err(Error::Config("network needs at least input and output sizes".into()));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..sizes.len() - 1 {
            let fan_in = sizes[l];
            let bound = (3.0f64).sqrt() / (fan_in as f64).sqrt();
            let w: Vec<f64> = (0..sizes[l] * sizes[l + 1])
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; sizes[l + 1]]);
        }
        Ok(DenseNetwork {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Forward pass keeping per-layer activations for backprop.
    fn forward_full(&self, batch: &[f64], rows: usize) -> Result<Vec<Vec<f64>>> {
        if rows * self.input_dim() != batch.len() {
            return Err(Error::Shape(format!(
                "batch of {} values is not {} rows of dim {}",
                batch.len(),
                rows,
                self.input_dim()
            )));
        }
        let mut activations = Vec::with_capacity(self.n_layers() + 1);
        activations.push(batch.to_vec());
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let prev = &activations[l];
            let mut out = vec![0.0; rows * n_out];
            for r in 0..rows {
                for j in 0..n_out {
                    let mut acc = self.biases[l][j];
                    for i in 0..n_in {
                        acc += prev[r * n_in + i] * self.weights[l][i * n_out + j];
                    }
                    // relu on hidden layers, identity on the output layer
                    out[r * n_out + j] = if l + 1 < self.n_layers() { acc.max(0.0) } else { acc };
                }
            }
            activations.push(out);
        }
        Ok(activations)
    }

    /// Pure forward pass; `batch` is row-major with `rows` rows.
    pub fn forward(&self, batch: &[f64], rows: usize) -> Result<Vec<f64>> {
        Ok(self.forward_full(batch, rows)?.pop().unwrap())
    }

    /// Batch-mean loss and exact analytic gradients for every parameter.
    pub fn backward(
        &self,
        batch: &[f64],
        rows: usize,
        loss: LossKind,
        targets: &[f64],
    ) -> Result<(f64, GradientTape)> {
        let activations = self.forward_full(batch, rows)?;
        let out = activations.last().unwrap();
        if targets.len() != out.len() {
            return Err(Error::Shape(format!(
                "targets length {} does not match output length {}",
                targets.len(),
                out.len()
            )));
        }
        let n = out.len() as f64;
        let mut loss_acc = 0.0;
        // dL/d(output)
        let mut delta: Vec<f64> = out
            .iter()
            .zip(targets)
            .map(|(&y, &t)| {
                let r = y - t;
                match loss {
                    LossKind::Mse => {
                        loss_acc += r * r;
                        2.0 * r / n
                    }
                    LossKind::Huber { delta } => {
                        if r.abs() <= delta {
                            loss_acc += 0.5 * r * r;
                            r / n
                        } else {
                            loss_acc += delta * (r.abs() - 0.5 * delta);
                            delta * r.signum() / n
                        }
                    }
                }
            })
            .collect();
        let loss_value = loss_acc / n;
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {loss_value}")));
        }

        let mut d_weights: Vec<Vec<f64>> =
            self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut d_biases: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();

        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let prev = &activations[l];
            for r in 0..rows {
                for j in 0..n_out {
                    let g = delta[r * n_out + j];
                    d_biases[l][j] += g;
                    for i in 0..n_in {
                        d_weights[l][i * n_out + j] += prev[r * n_in + i] * g;
                    }
                }
            }
            if l > 0 {
                let mut prev_delta = vec![0.0; rows * n_in];
                for r in 0..rows {
                    for i in 0..n_in {
                        // relu gate: activation zero means the unit was off
                        if prev[r * n_in + i] > 0.0 {
                            let mut acc = 0.0;
                            for j in 0..n_out {
                                acc += self.weights[l][i * n_out + j] * delta[r * n_out + j];
                            }
                            prev_delta[r * n_in + i] = acc;
                        }
                    }
                }
                delta = prev_delta;
            }
        }
        Ok((
            loss_value,
            GradientTape {
                d_weights,
                d_biases,
            },
        ))
    }

    /// Adaptive-moment gradient step (decay 0.9/0.999, epsilon 1e-8,
    /// bias-corrected).
    pub fn sgd_step(
        &mut self,
        tape: &GradientTape,
        learning_rate: f64,
        state: &mut OptimizerState,
    ) -> Result<()> {
        if learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        let update = |param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64]| -> Result<()> {
            for k in 0..param.len() {
                let g = grad[k];
                if !g.is_finite() {
                    return Err(Error::Numeric(format!("non-finite gradient {g}")));
                }
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g;
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                param[k] -= learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
            }
            Ok(())
        };
        for l in 0..self.weights.len() {
            update(
                &mut self.weights[l],
                &tape.d_weights[l],
                &mut state.m_weights[l],
                &mut state.v_weights[l],
            )?;
            update(
                &mut self.biases[l],
                &tape.d_biases[l],
                &mut state.m_biases[l],
                &mut state.v_biases[l],
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "format_version": NETWORK_FORMAT_VERSION,
            "sizes": self.sizes,
            "hidden_activation": "relu",
            "output_activation": "identity",
            "weights": self.weights,
            "biases": self.biases,
        })
    }

    pub fn from_json(doc: &serde_json::Value) -> Result<DenseNetwork> {
        let version = doc
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Serialize("network document missing format_version".into()))?;
        if version != NETWORK_FORMAT_VERSION as u64 {
            return Err(Error::Serialize(format!(
                "unsupported network format version {version} (expected {NETWORK_FORMAT_VERSION})"
            )));
        }
        let net: DenseNetwork = serde_json::from_value(doc.clone())
            .map_err(|e| Error::Serialize(format!("bad network document: {e}")))?;
        for l in 0..net.sizes.len() - 1 {
            if net.weights.get(l).map(|w| w.len()) != Some(net.sizes[l] * net.sizes[l + 1])
                || net.biases.get(l).map(|b| b.len()) != Some(net.sizes[l + 1])
            {
                return Err(Error::Serialize("network parameter shapes disagree with sizes".into()));
            }
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = DenseNetwork::init(&[3, 4, 2], 1).unwrap();
        for w in &mut net.weights {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        let out = net.forward(&[1.0, -2.0, 3.0], 1).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer() {
        let mut net = DenseNetwork::init(&[2, 2], 5).unwrap();
        net.weights[0] = vec![1.0, 0.0, 0.0, 1.0];
        net.biases[0] = vec![0.0, 0.0];
        let out = net.forward(&[0.3, -0.7], 1).unwrap();
        assert_eq!(out, vec![0.3, -0.7]);
    }

    #[test]
    fn small_net_hand_computed() {
        // 1-2-1: h = relu([0.5x, -0.25x] + [0.1, 0.2]); y = 1*h0 + 2*h1 + 0.3
        let mut net = DenseNetwork::init(&[1, 2, 1], 0).unwrap();
        net.weights[0] = vec![0.5, -0.25];
        net.biases[0] = vec![0.1, 0.2];
        net.weights[1] = vec![1.0, 2.0];
        net.biases[1] = vec![0.3];
        let out = net.forward(&[2.0], 1).unwrap();
        // h = relu([1.1, -0.3]) = [1.1, 0]; y = 1.1 + 0 + 0.3
        assert!((out[0] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_bad_shape() {
        let net = DenseNetwork::init(&[3, 2], 0).unwrap();
        assert!(net.forward(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn mse_at_minimum_is_zero() {
        let net = DenseNetwork::init(&[2, 3, 2], 2).unwrap();
        let batch = [0.1, 0.9, -0.4, 0.2];
        let out = net.forward(&batch, 2).unwrap();
        let (loss, tape) = net.backward(&batch, 2, LossKind::Mse, &out).unwrap();
        assert_eq!(loss, 0.0);
        for g in tape.d_weights.iter().flatten().chain(tape.d_biases.iter().flatten()) {
            assert_eq!(*g, 0.0);
        }
    }

    #[test]
    fn huber_quadratic_branch() {
        // single output, residual 0.5, delta 1 -> 0.5 * 0.25 = 0.125
        let mut net = DenseNetwork::init(&[1, 1], 0).unwrap();
        net.weights[0] = vec![1.0];
        net.biases[0] = vec![0.0];
        let (loss, _) = net
            .backward(&[0.5], 1, LossKind::Huber { delta: 1.0 }, &[0.0])
            .unwrap();
        assert!((loss - 0.125).abs() < 1e-12);
    }

    fn finite_difference_check(sizes: &[usize], seed: u64, loss: LossKind) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let net = DenseNetwork::init(sizes, seed).unwrap();
        let rows = 3;
        let batch: Vec<f64> = (0..rows * sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let targets: Vec<f64> = (0..rows * sizes[sizes.len() - 1])
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let (_, tape) = net.backward(&batch, rows, loss, &targets).unwrap();
        let h = 1e-5;
        let loss_at = |n: &DenseNetwork| n.backward(&batch, rows, loss, &targets).unwrap().0;
        for l in 0..net.weights.len() {
            for k in 0..net.weights[l].len() {
                let mut plus = net.clone();
                plus.weights[l][k] += h;
                let mut minus = net.clone();
                minus.weights[l][k] -= h;
                let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let analytic = tape.d_weights[l][k];
                let denom = numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-4,
                    "layer {l} w[{k}]: numeric {numeric} vs analytic {analytic}"
                );
            }
            for k in 0..net.biases[l].len() {
                let mut plus = net.clone();
                plus.biases[l][k] += h;
                let mut minus = net.clone();
                minus.biases[l][k] -= h;
                let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let analytic = tape.d_biases[l][k];
                let denom = numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-4,
                    "layer {l} b[{k}]: numeric {numeric} vs analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(&[4, 8, 3], 11, LossKind::Mse);
        finite_difference_check(&[3, 5, 5, 2], 12, LossKind::Mse);
        finite_difference_check(&[4, 8, 3], 13, LossKind::Huber { delta: 1.0 });
    }

    #[test]
    fn optimizer_converges_on_scalar_quadratic() {
        // minimize (x - 3)^2 via a 1-1 identity "network" on input 1
        let mut net = DenseNetwork::init(&[1, 1], 3).unwrap();
        net.weights[0] = vec![0.0];
        net.biases[0] = vec![0.0];
        let mut state = OptimizerState::new(&net);
        for _ in 0..500 {
            let (_, tape) = net.backward(&[1.0], 1, LossKind::Mse, &[3.0]).unwrap();
            net.sgd_step(&tape, 0.05, &mut state).unwrap();
        }
        let out = net.forward(&[1.0], 1).unwrap();
        assert!((out[0] - 3.0).abs() < 1e-2, "got {}", out[0]);
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut net = DenseNetwork::init(&[2, 2], 4).unwrap();
        let before = net.clone();
        let tape = GradientTape {
            d_weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            d_biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        };
        let mut state = OptimizerState::new(&net);
        net.sgd_step(&tape, 0.1, &mut state).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn identical_nets_update_identically() {
        let mut a = DenseNetwork::init(&[2, 3, 1], 9).unwrap();
        let mut b = a.clone();
        let batch = [0.5, -0.5];
        let (_, tape) = a.backward(&batch, 1, LossKind::Mse, &[1.0]).unwrap();
        let mut sa = OptimizerState::new(&a);
        let mut sb = OptimizerState::new(&b);
        a.sgd_step(&tape, 0.01, &mut sa).unwrap();
        b.sgd_step(&tape, 0.01, &mut sb).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_determinism_and_bound() {
        let a = DenseNetwork::init(&[100, 10], 42).unwrap();
        let b = DenseNetwork::init(&[100, 10], 42).unwrap();
        assert_eq!(a, b);
        let bound = 0.1 * (3.0f64).sqrt();
        assert!(a.weights[0].iter().all(|w| w.abs() <= bound));
        assert!(a.biases[0].iter().all(|&b| b == 0.0));
        let c = DenseNetwork::init(&[100, 10], 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn forward_is_pure() {
        let net = DenseNetwork::init(&[3, 6, 2], 17).unwrap();
        let batch = [0.1, 0.2, 0.3, -0.1, -0.2, -0.3];
        let a = net.forward(&batch, 2).unwrap();
        let b = net.forward(&batch, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn autoencoder_learns_a_line() {
        // points on y = 2x; a 2-4-2 net should cut reconstruction mse by 90%
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data: Vec<f64> = (0..32)
            .flat_map(|_| {
                let x = rng.gen_range(-1.0..1.0);
                [x, 2.0 * x]
            })
            .collect();
        let mut net = DenseNetwork::init(&[2, 4, 2], 21).unwrap();
        let mut state = OptimizerState::new(&net);
        let (initial, _) = net.backward(&data, 32, LossKind::Mse, &data).unwrap();
        for _ in 0..2000 {
            let (_, tape) = net.backward(&data, 32, LossKind::Mse, &data).unwrap();
            net.sgd_step(&tape, 0.01, &mut state).unwrap();
        }
        let (fin, _) = net.backward(&data, 32, LossKind::Mse, &data).unwrap();
        assert!(fin < 0.1 * initial, "initial {initial}, final {fin}");
    }

    #[test]
    fn json_roundtrip_and_version_check() {
        let net = DenseNetwork::init(&[3, 5, 2], 99).unwrap();
        let doc = net.to_json();
        let back = DenseNetwork::from_json(&doc).unwrap();
        assert_eq!(net, back);

        let mut bad = doc.clone();
        bad["format_version"] = serde_json::json!(0);
        assert!(DenseNetwork::from_json(&bad).is_err());
    }
}
