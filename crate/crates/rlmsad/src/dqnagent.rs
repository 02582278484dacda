//! Value-based agent: Q-network over masked state vectors with one output
//! per pool member, trained by uniform experience replay against a
//! periodically synced target network, epsilon-greedy exploration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdpenv::{Episode, FeatureMask, Transition};
use crate::neuralcore::{DenseNetwork, LossKind, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub train_frequency: usize,
    pub target_sync: usize,
    pub epsilon_final: f64,
    /// Fraction of total steps over which epsilon anneals from 1.0.
    pub epsilon_fraction: f64,
    pub huber_delta: f64,
    pub total_steps: usize,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            hidden_sizes: vec![64, 64],
            learning_rate: 1e-4,
            replay_capacity: 100_000,
            batch_size: 32,
            warmup_steps: 1000,
            train_frequency: 4,
            target_sync: 2000,
            epsilon_final: 0.05,
            epsilon_fraction: 0.1,
            huber_delta: 1.0,
            total_steps: 50_000,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.is_empty() || self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        if self.learning_rate <= 0.0 || self.huber_delta <= 0.0 {
            return Err(Error::Config("learning rate and huber delta must be positive".into()));
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return Err(Error::Config("batch size must be in 1..=replay capacity".into()));
        }
        if self.train_frequency == 0 || self.target_sync == 0 || self.total_steps == 0 {
            return Err(Error::Config("step intervals must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon_final) || !(0.0..=1.0).contains(&self.epsilon_fraction)
        {
            return Err(Error::Config("epsilon settings must lie in [0,1]".into()));
        }
        Ok(())
    }

    fn epsilon(&self, step: usize) -> f64 {
        let anneal = (self.total_steps as f64 * self.epsilon_fraction).max(1.0);
        let frac = (step as f64 / anneal).min(1.0);
        1.0 + frac * (self.epsilon_final - 1.0)
    }
}

/// Ring buffer with uniform sampling; overwrites oldest first.
#[derive(Debug)]
pub struct ReplayBuffer {
    records: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        ReplayBuffer {
            records: Vec::with_capacity(capacity.min(4096)),
            capacity,
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.records.len() < self.capacity {
            self.records.push(t);
        } else {
            self.records[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn sample<'a>(&'a self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<&'a Transition> {
        (0..batch)
            .map(|_| &self.records[rng.gen_range(0..self.records.len())])
            .collect()
    }

    #[cfg(test)]
    pub fn contains_reward(&self, reward: f64) -> bool {
        self.records.iter().any(|t| t.reward == reward)
    }
}

/// Greedy policy over a trained Q-network; ties break to the lowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub network: DenseNetwork,
    pub mask: FeatureMask,
    pub pool_size: usize,
}

pub const POLICY_FORMAT_VERSION: u32 = 1;

impl Policy {
    pub fn to_json(&self, config_echo: &AgentConfig) -> serde_json::Value {
        serde_json::json!({
            "format_version": POLICY_FORMAT_VERSION,
            "network": self.network.to_json(),
            "mask": self.mask,
            "pool_size": self.pool_size,
            "agent_config": config_echo,
        })
    }

    pub fn from_json(doc: &serde_json::Value) -> Result<Policy> {
        let version = doc
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Serialize("policy document missing format_version".into()))?;
        if version != POLICY_FORMAT_VERSION as u64 {
            return Err(Error::Serialize(format!(
                "unsupported policy format version {version}"
            )));
        }
        let network = DenseNetwork::from_json(
            doc.get("network")
                .ok_or_else(|| Error::Serialize("policy document missing network".into()))?,
        )?;
        let mask: FeatureMask = serde_json::from_value(
            doc.get("mask")
                .cloned()
                .ok_or_else(|| Error::Serialize("policy document missing mask".into()))?,
        )
        .map_err(|e| Error::Serialize(format!("bad mask: {e}")))?;
        let pool_size = doc
            .get("pool_size")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Serialize("policy document missing pool_size".into()))?
            as usize;
        Ok(Policy {
            network,
            mask,
            pool_size,
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainingStats {
    pub episode_returns: Vec<f64>,
    pub steps: usize,
    pub gradient_updates: usize,
    pub final_loss: f64,
}

/// argmax over Q outputs, lowest index on exact ties.
pub fn act_greedy(policy: &Policy, obs: &[f64]) -> Result<usize> {
    argmax_q(&policy.network, obs)
}

fn argmax_q(network: &DenseNetwork, obs: &[f64]) -> Result<usize> {
    let q = network.forward(obs, 1)?;
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite Q output {q:?}")));
    }
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Regression targets for one replay batch: online outputs everywhere except
/// the acted entry, which becomes r + gamma * (1 - done) * max_a' Q_target(s').
pub fn compute_targets(
    online: &DenseNetwork,
    target: &DenseNetwork,
    batch: &[&Transition],
    gamma: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let obs_dim = online.input_dim();
    let n_actions = online.output_dim();
    let rows = batch.len();
    let mut states = Vec::with_capacity(rows * obs_dim);
    let mut next_states = Vec::with_capacity(rows * obs_dim);
    for t in batch {
        states.extend_from_slice(&t.observation);
        next_states.extend_from_slice(&t.next_observation);
    }
    let q_online = online.forward(&states, rows)?;
    let q_next = target.forward(&next_states, rows)?;
    let mut targets = q_online.clone();
    for (r, t) in batch.iter().enumerate() {
        let bootstrap = if t.done {
            0.0
        } else {
            q_next[r * n_actions..(r + 1) * n_actions]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
        };
        targets[r * n_actions + t.action] = t.reward + gamma * bootstrap;
    }
    Ok((states, targets))
}

/// Run `total_steps` environment interactions with epsilon-greedy
/// exploration and replayed Q-learning updates. gamma is fixed at 1 to
/// match the undiscounted environment. Deterministic per seed.
pub fn train(env: &mut Episode<'_>, cfg: &AgentConfig) -> Result<(Policy, TrainingStats)> {
    cfg.validate()?;
    let obs_dim = env.observation_len();
    let n_actions = env.pool_size();
    let mut sizes = vec![obs_dim];
    sizes.extend_from_slice(&cfg.hidden_sizes);
    sizes.push(n_actions);

    let mut online = DenseNetwork::init(&sizes, cfg.seed)?;
    let mut target = online.clone();
    let mut opt = OptimizerState::new(&online);
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));

    let gamma = 1.0;
    let mut stats = TrainingStats::default();
    let mut obs = env.reset();
    for step in 0..cfg.total_steps {
        let action = if rng.gen_range(0.0..1.0) < cfg.epsilon(step) {
            rng.gen_range(0..n_actions)
        } else {
            argmax_q(&online, &obs)?
        };
        let (next_obs, reward, done) = env.step(action)?;
        buffer.push(Transition {
            observation: obs,
            action,
            reward,
            next_observation: next_obs.clone(),
            done,
        });
        if done {
            stats.episode_returns.push(env.episode_return);
            obs = env.reset();
        } else {
            obs = next_obs;
        }

        let step1 = step + 1;
        if step1 >= cfg.warmup_steps
            && step1 % cfg.train_frequency == 0
            && buffer.len() >= cfg.batch_size
        {
            let batch = buffer.sample(cfg.batch_size, &mut rng);
            let (states, targets) = compute_targets(&online, &target, &batch, gamma)?;
            let (loss, tape) = online.backward(
                &states,
                cfg.batch_size,
                LossKind::Huber {
                    delta: cfg.huber_delta,
                },
                &targets,
            )?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged at step {step1}: loss {loss}"
                )));
            }
            online.sgd_step(&tape, cfg.learning_rate, &mut opt)?;
            stats.gradient_updates += 1;
            stats.final_loss = loss;
        }
        if step1 % cfg.target_sync == 0 {
            target = online.clone();
        }
    }
    stats.steps = cfg.total_steps;
    Ok((
        Policy {
            network: online,
            mask: env.mask,
            pool_size: n_actions,
        },
        stats,
    ))
}

/// Single greedy pass over the episode; returns the transition trace and the
/// undiscounted return.
pub fn evaluate_policy(policy: &Policy, env: &mut Episode<'_>) -> Result<(Vec<Transition>, f64)> {
    let mut obs = env.reset();
    let mut trace = Vec::with_capacity(env.len());
    loop {
        let action = act_greedy(policy, &obs)?;
        let (next_obs, reward, done) = env.step(action)?;
        trace.push(Transition {
            observation: obs,
            action,
            reward,
            next_observation: next_obs.clone(),
            done,
        });
        if done {
            break;
        }
        obs = next_obs;
    }
    Ok((trace, env.episode_return))
}

/// Predicted label sequence realized by a greedy rollout.
pub fn rollout_predictions(policy: &Policy, env: &mut Episode<'_>, labels: &[Vec<u8>]) -> Result<Vec<u8>> {
    let (trace, _) = evaluate_policy(policy, env)?;
    Ok(trace
        .iter()
        .enumerate()
        .map(|(t, tr)| labels[tr.action][t])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::threshold_scores;
    use crate::mdpenv::{PoolObservations, RewardConfig};

    fn bandit_parts() -> (PoolObservations, Vec<u8>) {
        // Detector 0 always predicts the truth, detector 1 always predicts
        // the complement: arm 0 strictly dominates in every state.
        let good = threshold_scores(&[0.0, 1.0, 2.0, 3.0], 0.5).unwrap();
        let bad = threshold_scores(&[3.0, 2.0, 1.0, 0.0], 0.5).unwrap();
        assert_eq!(good.labels, vec![0, 0, 1, 1]);
        assert_eq!(bad.labels, vec![1, 1, 0, 0]);
        let obs = PoolObservations::build(&[good, bad]).unwrap();
        let truth = obs.labels[0].clone();
        (obs, truth)
    }

    #[test]
    fn replay_buffer_ring_semantics() {
        let mut buf = ReplayBuffer::new(4);
        for i in 0..8 {
            buf.push(Transition {
                observation: vec![0.0],
                action: 0,
                reward: i as f64,
                next_observation: vec![0.0],
                done: false,
            });
            assert!(buf.len() <= 4);
        }
        for old in 0..4 {
            assert!(!buf.contains_reward(old as f64));
        }
        for new in 4..8 {
            assert!(buf.contains_reward(new as f64));
        }
    }

    #[test]
    fn greedy_argmax_and_ties() {
        let mut net = DenseNetwork::init(&[1, 3], 0).unwrap();
        net.weights[0] = vec![0.0, 0.0, 0.0];
        net.biases[0] = vec![0.2, 0.9, 0.1];
        let policy = Policy {
            network: net.clone(),
            mask: FeatureMask::full(),
            pool_size: 3,
        };
        assert_eq!(act_greedy(&policy, &[0.0]).unwrap(), 1);

        net.biases[0] = vec![0.5, 0.5, 0.1];
        let policy = Policy {
            network: net.clone(),
            mask: FeatureMask::full(),
            pool_size: 3,
        };
        assert_eq!(act_greedy(&policy, &[0.0]).unwrap(), 0);

        // shift-invariance of argmax
        net.biases[0] = vec![1.5, 1.5, 1.1];
        let policy = Policy {
            network: net,
            mask: FeatureMask::full(),
            pool_size: 3,
        };
        assert_eq!(act_greedy(&policy, &[0.0]).unwrap(), 0);
    }

    #[test]
    fn greedy_is_stable_over_repeated_calls() {
        let net = DenseNetwork::init(&[4, 8, 3], 5).unwrap();
        let policy = Policy {
            network: net,
            mask: FeatureMask::full(),
            pool_size: 3,
        };
        let obs = [0.3, -0.2, 0.8, 0.1];
        let first = act_greedy(&policy, &obs).unwrap();
        for _ in 0..1000 {
            assert_eq!(act_greedy(&policy, &obs).unwrap(), first);
        }
    }

    #[test]
    fn bellman_targets_use_target_network_for_next_state() {
        let mut online = DenseNetwork::init(&[1, 2], 0).unwrap();
        online.weights[0] = vec![0.0, 0.0];
        online.biases[0] = vec![5.0, 6.0];
        let mut target = online.clone();
        target.biases[0] = vec![100.0, 50.0];
        let tr = Transition {
            observation: vec![0.0],
            action: 0,
            reward: 1.0,
            next_observation: vec![0.0],
            done: false,
        };
        let (_, targets) = compute_targets(&online, &target, &[&tr], 1.0).unwrap();
        // acted entry: r + max target-net output = 1 + 100, not 1 + 6
        assert_eq!(targets[0], 101.0);
        // the other entry regresses to the online output (zero gradient)
        assert_eq!(targets[1], 6.0);

        let done = Transition {
            done: true,
            ..tr
        };
        let (_, targets) = compute_targets(&online, &target, &[&done], 1.0).unwrap();
        assert_eq!(targets[0], 1.0);
    }

    #[test]
    fn target_sync_copies_exactly() {
        let (obs, truth) = bandit_parts();
        let mut env = Episode::new(
            &obs,
            &truth,
            RewardConfig::baseline(),
            FeatureMask::full(),
        )
        .unwrap();
        let cfg = AgentConfig {
            total_steps: 64,
            warmup_steps: 8,
            batch_size: 8,
            target_sync: 64,
            seed: 4,
            ..AgentConfig::default()
        };
        // after total_steps divisible by target_sync, the last sync makes the
        // returned online net equal to what target held; verified indirectly
        // by running twice and comparing determinism
        let (p1, _) = train(&mut env, &cfg).unwrap();
        let (p2, _) = train(&mut env, &cfg).unwrap();
        assert_eq!(p1.network, p2.network);
    }

    #[test]
    fn bandit_converges_to_correct_arm() {
        let (obs, truth) = bandit_parts();
        let mut successes = 0;
        for seed in 0..10 {
            let mut env = Episode::new(
                &obs,
                &truth,
                RewardConfig::baseline(),
                FeatureMask::full(),
            )
            .unwrap();
            let cfg = AgentConfig {
                total_steps: 5000,
                warmup_steps: 200,
                learning_rate: 1e-3,
                target_sync: 250,
                seed,
                ..AgentConfig::default()
            };
            let (policy, _) = train(&mut env, &cfg).unwrap();
            let obs0 = env.reset();
            if act_greedy(&policy, &obs0).unwrap() == 0 {
                successes += 1;
            }
        }
        assert!(successes >= 9, "only {successes}/10 seeds found the good arm");
    }

    #[test]
    fn evaluation_is_deterministic_and_accounts_exactly() {
        let (obs, truth) = bandit_parts();
        let mut env = Episode::new(
            &obs,
            &truth,
            RewardConfig::baseline(),
            FeatureMask::full(),
        )
        .unwrap();
        let cfg = AgentConfig {
            total_steps: 500,
            warmup_steps: 50,
            seed: 1,
            ..AgentConfig::default()
        };
        let (policy, _) = train(&mut env, &cfg).unwrap();
        let (trace_a, ret_a) = evaluate_policy(&policy, &mut env).unwrap();
        let (trace_b, ret_b) = evaluate_policy(&policy, &mut env).unwrap();
        assert_eq!(trace_a, trace_b);
        assert_eq!(ret_a, ret_b);
        let recomputed: f64 = trace_a.iter().map(|t| t.reward).sum();
        assert_eq!(ret_a, recomputed);
    }

    #[test]
    fn policy_json_roundtrip() {
        let net = DenseNetwork::init(&[5, 8, 3], 2).unwrap();
        let policy = Policy {
            network: net,
            mask: FeatureMask::drop_dt(),
            pool_size: 3,
        };
        let doc = policy.to_json(&AgentConfig::default());
        let back = Policy::from_json(&doc).unwrap();
        assert_eq!(policy, back);
        let mut bad = doc.clone();
        bad["format_version"] = serde_json::json!(99);
        assert!(Policy::from_json(&bad).is_err());
    }
}
