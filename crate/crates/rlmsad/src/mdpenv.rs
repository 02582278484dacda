//! Deterministic model-selection environment. The agent observes the state
//! variables of the currently selected detector at the current timestep,
//! picks a detector index, collects a confusion-based reward, and the
//! episode advances along the test sequence with no discounting.

use serde::{Deserialize, Serialize};

use crate::confidence::{distance_to_threshold, prediction_consensus};
use crate::detectors::DetectorOutput;
use crate::error::{Error, Result};

pub const STATE_COMPONENTS: usize = 5;

/// Which of the five state variables the agent sees. Masked components are
/// removed from the observation, not zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub scaled_score: bool,
    pub scaled_threshold: bool,
    pub predicted_label: bool,
    pub dt_confidence: bool,
    pub pc_confidence: bool,
}

impl FeatureMask {
    pub fn full() -> FeatureMask {
        FeatureMask {
            scaled_score: true,
            scaled_threshold: true,
            predicted_label: true,
            dt_confidence: true,
            pc_confidence: true,
        }
    }

    /// Distance-to-threshold confidence removed.
    pub fn drop_dt() -> FeatureMask {
        FeatureMask {
            dt_confidence: false,
            ..FeatureMask::full()
        }
    }

    /// Prediction-consensus confidence removed.
    pub fn drop_pc() -> FeatureMask {
        FeatureMask {
            pc_confidence: false,
            ..FeatureMask::full()
        }
    }

    pub fn parse(s: &str) -> Result<FeatureMask> {
        match s {
            "full" => Ok(FeatureMask::full()),
            "drop_dt" => Ok(FeatureMask::drop_dt()),
            "drop_pc" => Ok(FeatureMask::drop_pc()),
            other => Err(Error::Config(format!(
                "unknown feature mask '{other}' (expected full|drop_dt|drop_pc)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        if *self == FeatureMask::full() {
            "full"
        } else if *self == FeatureMask::drop_dt() {
            "drop_dt"
        } else if *self == FeatureMask::drop_pc() {
            "drop_pc"
        } else {
            "custom"
        }
    }

    pub fn observation_len(&self) -> usize {
        [
            self.scaled_score,
            self.scaled_threshold,
            self.predicted_label,
            self.dt_confidence,
            self.pc_confidence,
        ]
        .iter()
        .filter(|&&b| b)
        .count()
    }

    pub fn apply(&self, full: &[f64; STATE_COMPONENTS]) -> Vec<f64> {
        let keep = [
            self.scaled_score,
            self.scaled_threshold,
            self.predicted_label,
            self.dt_confidence,
            self.pc_confidence,
        ];
        full.iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(&v, _)| v)
            .collect()
    }
}

/// The four reward magnitudes. FP and FN enter the reward negated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub tp: f64,
    pub tn: f64,
    pub fp: f64,
    pub fn_: f64,
}

impl RewardConfig {
    /// The overall-comparison setting: TP 1, TN 0.1, FP -0.4, FN -1.5.
    pub fn baseline() -> RewardConfig {
        RewardConfig {
            tp: 1.0,
            tn: 0.1,
            fp: 0.4,
            fn_: 1.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let violations = self.violations();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "reward config violates: {}",
                violations.join("; ")
            )))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.tp > 0.0 && self.tn > 0.0 && self.fp > 0.0 && self.fn_ > 0.0) {
            v.push("all reward magnitudes must be strictly positive".to_string());
        }
        if !(self.tp > self.tn) {
            v.push(format!("r1 > r2 violated (r1={}, r2={})", self.tp, self.tn));
        }
        if !(self.fn_ > self.fp) {
            v.push(format!("r4 > r3 violated (r4={}, r3={})", self.fn_, self.fp));
        }
        v
    }

    pub fn reward(&self, predicted: u8, truth: u8) -> f64 {
        match (predicted, truth) {
            (1, 1) => self.tp,
            (0, 0) => self.tn,
            (1, 0) => -self.fp,
            (0, 1) => -self.fn_,
            _ => unreachable!("labels are binary"),
        }
    }
}

/// Precomputed per-timestep state variables for every pool member:
/// `features[t * m + j]` is the 5-component vector of detector `j` at `t`.
#[derive(Debug, Clone)]
pub struct PoolObservations {
    features: Vec<[f64; STATE_COMPONENTS]>,
    pub labels: Vec<Vec<u8>>, // per detector, per timestep
    pub len: usize,
    pub pool_size: usize,
}

impl PoolObservations {
    pub fn build(outputs: &[DetectorOutput]) -> Result<PoolObservations> {
        let m = outputs.len();
        if m < 2 {
            return Err(Error::Config(format!("pool size {m} < 2")));
        }
        let t_len = outputs[0].raw_scores.len();
        if t_len == 0 {
            return Err(Error::Data("empty test sequence".into()));
        }
        if outputs.iter().any(|o| o.raw_scores.len() != t_len) {
            return Err(Error::Shape("detector outputs disagree on sequence length".into()));
        }
        let labels: Vec<Vec<u8>> = outputs.iter().map(|o| o.labels.clone()).collect();
        let mut features = Vec::with_capacity(t_len * m);
        let mut at_t = vec![0u8; m];
        for t in 0..t_len {
            for (j, o) in outputs.iter().enumerate() {
                at_t[j] = o.labels[t];
            }
            for o in outputs.iter() {
                let dt = distance_to_threshold(
                    o.raw_scores[t],
                    o.threshold_raw,
                    o.score_max,
                    o.score_min,
                )?;
                let pc = prediction_consensus(&at_t, o.labels[t])?;
                features.push([
                    o.scaled_scores[t],
                    o.threshold_scaled,
                    o.labels[t] as f64,
                    dt,
                    pc,
                ]);
            }
        }
        Ok(PoolObservations {
            features,
            labels,
            len: t_len,
            pool_size: m,
        })
    }

    pub fn state(&self, t: usize, detector: usize) -> &[f64; STATE_COMPONENTS] {
        &self.features[t * self.pool_size + detector]
    }
}

/// One replay record.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Episode<'a> {
    obs: &'a PoolObservations,
    truth: &'a [u8],
    pub reward_config: RewardConfig,
    pub mask: FeatureMask,
    cursor: usize,
    selected: usize,
    pub episode_return: f64,
    done: bool,
}

impl<'a> Episode<'a> {
    pub fn new(
        obs: &'a PoolObservations,
        truth: &'a [u8],
        reward_config: RewardConfig,
        mask: FeatureMask,
    ) -> Result<Episode<'a>> {
        reward_config.validate()?;
        if truth.len() != obs.len {
            return Err(Error::Shape(format!(
                "truth length {} does not match sequence length {}",
                truth.len(),
                obs.len
            )));
        }
        Ok(Episode {
            obs,
            truth,
            reward_config,
            mask,
            cursor: 0,
            selected: 0,
            episode_return: 0.0,
            done: false,
        })
    }

    pub fn len(&self) -> usize {
        self.obs.len
    }

    pub fn is_empty(&self) -> bool {
        self.obs.len == 0
    }

    pub fn pool_size(&self) -> usize {
        self.obs.pool_size
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn observation_len(&self) -> usize {
        self.mask.observation_len()
    }

    /// Back to timestep 0 with detector 0 selected.
    pub fn reset(&mut self) -> Vec<f64> {
        self.cursor = 0;
        self.selected = 0;
        self.episode_return = 0.0;
        self.done = false;
        self.mask.apply(self.obs.state(0, 0))
    }

    /// Apply one action: the chosen detector predicts at the current cursor,
    /// the reward compares that prediction with ground truth, and the next
    /// observation is the chosen detector's state at the next timestep.
    pub fn step(&mut self, action: usize) -> Result<(Vec<f64>, f64, bool)> {
        if self.done {
            return Err(Error::Data("step called on a finished episode".into()));
        }
        if action >= self.obs.pool_size {
            return Err(Error::Data(format!(
                "action {} out of range for pool size {}",
                action, self.obs.pool_size
            )));
        }
        let predicted = self.obs.labels[action][self.cursor];
        let reward = self.reward_config.reward(predicted, self.truth[self.cursor]);
        self.episode_return += reward;
        self.selected = action;
        self.cursor += 1;
        self.done = self.cursor >= self.obs.len;
        let next = if self.done {
            vec![0.0; self.mask.observation_len()]
        } else {
            self.mask.apply(self.obs.state(self.cursor, self.selected))
        };
        Ok((next, reward, self.done))
    }
}

/// Named-constraint report for a reward configuration.
pub fn validate_reward_config(cfg: &RewardConfig) -> std::result::Result<(), Vec<String>> {
    let v = cfg.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}
