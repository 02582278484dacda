//! Plain-text `key = value` run configuration shared by every subcommand.
//! `#` starts a comment; unknown keys are rejected so typos fail fast.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dataio::SynthConfig;
use crate::detectors::{DetectorHyper, DetectorKind};
use crate::dqnagent::AgentConfig;
use crate::error::{Error, Result};
use crate::mdpenv::{FeatureMask, RewardConfig};

/// Every key the parser accepts, with its documentation line. Rendered by
/// the CLI help text.
pub const DOCUMENTED_KEYS: &[(&str, &str)] = &[
    ("data.train_csv", "path to the anomaly-free training CSV"),
    ("data.test_csv", "path to the labeled test CSV"),
    ("data.label_column", "name of the label column in the test CSV (default: label)"),
    ("data.downsample", "block size for mean downsampling, 1 = off (default: 1)"),
    ("synth.t_train", "synthetic training length (default: 20000)"),
    ("synth.t_test", "synthetic test length (default: 5000)"),
    ("synth.d", "synthetic feature count (default: 5)"),
    ("synth.anomaly_rate", "requested anomaly fraction in (0,0.5) (default: 0.12)"),
    ("synth.segment_plan", "profile:weight list over spike|shift|drift (default: spike:1,shift:1,drift:1)"),
    ("synth.seed", "generator seed (default: 0)"),
    ("pool.kinds", "comma list of iforest|ocsvm_sgd|ecod|copod|autoencoder"),
    ("pool.iforest_trees", "isolation-forest tree count (default: 100)"),
    ("pool.iforest_subsample", "isolation-forest subsample size (default: 256)"),
    ("pool.ocsvm_nu", "one-class SVM margin parameter in (0,1] (default: 0.5)"),
    ("pool.ocsvm_learning_rate", "one-class SVM SGD learning rate (default: 0.01)"),
    ("pool.ocsvm_epochs", "one-class SVM SGD epochs (default: 20)"),
    ("pool.ae_hidden", "autoencoder hidden width, 0 = derived (default: 0)"),
    ("pool.ae_bottleneck", "autoencoder bottleneck width, 0 = derived (default: 0)"),
    ("pool.ae_epochs", "autoencoder training epochs (default: 30)"),
    ("pool.ae_learning_rate", "autoencoder learning rate (default: 0.001)"),
    ("pool.ae_batch", "autoencoder minibatch size (default: 64)"),
    ("env.contamination", "thresholding contamination fraction (default: 0.12)"),
    ("env.window", "autoencoder window length (default: 12)"),
    ("env.reward_tp", "reward magnitude r1 for true positives (default: 1.0)"),
    ("env.reward_tn", "reward magnitude r2 for true negatives (default: 0.1)"),
    ("env.reward_fp", "penalty magnitude r3 for false positives (default: 0.4)"),
    ("env.reward_fn", "penalty magnitude r4 for false negatives (default: 1.5)"),
    ("env.mask", "state feature mask: full|drop_dt|drop_pc (default: full)"),
    ("agent.hidden", "Q-network hidden sizes, comma list (default: 64,64)"),
    ("agent.learning_rate", "Q-network learning rate (default: 0.0001)"),
    ("agent.replay_capacity", "replay buffer capacity (default: 100000)"),
    ("agent.batch_size", "replay batch size (default: 32)"),
    ("agent.warmup_steps", "steps before learning starts (default: 1000)"),
    ("agent.train_frequency", "env steps between gradient updates (default: 4)"),
    ("agent.target_sync", "steps between target-network syncs (default: 2000)"),
    ("agent.epsilon_final", "final exploration rate (default: 0.05)"),
    ("agent.epsilon_fraction", "fraction of steps spent annealing epsilon (default: 0.1)"),
    ("agent.huber_delta", "huber loss delta (default: 1.0)"),
    ("agent.total_steps", "total environment steps per training run (default: 50000)"),
    ("experiment.seeds", "comma list of run seeds (default: 0..9)"),
    ("experiment.output_dir", "directory for artifacts and reports (default: out)"),
    ("sweep.fp_values", "FP penalty magnitudes forming the sweep grid columns (default: 0.2,0.3,0.4,0.5,0.6)"),
    ("sweep.fn_values", "FN penalty magnitudes forming the sweep grid rows (default: 1.0,1.2,1.5,2.0)"),
];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    pub label_column: String,
    pub downsample: usize,
    pub synth: SynthConfig,
    pub synth_seed: u64,
    pub pool: Vec<DetectorKind>,
    pub hyper: DetectorHyper,
    pub contamination: f64,
    pub window: usize,
    pub reward: RewardConfig,
    pub mask: FeatureMask,
    pub agent: AgentConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub sweep_fp_values: Vec<f64>,
    pub sweep_fn_values: Vec<f64>,
    /// Raw file bytes, hashed into the run manifest.
    pub raw: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train_csv: None,
            test_csv: None,
            label_column: "label".into(),
            downsample: 1,
            synth: SynthConfig::default(),
            synth_seed: 0,
            pool: DetectorKind::ALL.to_vec(),
            hyper: DetectorHyper::default(),
            contamination: 0.12,
            window: 12,
            reward: RewardConfig::baseline(),
            mask: FeatureMask::full(),
            agent: AgentConfig::default(),
            seeds: (0..10).collect(),
            output_dir: PathBuf::from("out"),
            sweep_fp_values: vec![0.2, 0.3, 0.4, 0.5, 0.6],
            sweep_fn_values: vec![1.0, 1.2, 1.5, 2.0],
            raw: String::new(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{value}' for key '{key}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|s| parse_num(key, s.trim()))
        .collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let known: BTreeMap<&str, &str> = DOCUMENTED_KEYS.iter().copied().collect();
        let mut cfg = RunConfig {
            raw: text.to_string(),
            ..RunConfig::default()
        };
        for (line_no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", line_no + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !known.contains_key(key) {
                return Err(Error::Config(format!("line {}: unknown key '{key}'", line_no + 1)));
            }
            match key {
                "data.train_csv" => cfg.train_csv = Some(PathBuf::from(value)),
                "data.test_csv" => cfg.test_csv = Some(PathBuf::from(value)),
                "data.label_column" => cfg.label_column = value.to_string(),
                "data.downsample" => cfg.downsample = parse_num(key, value)?,
                "synth.t_train" => cfg.synth.t_train = parse_num(key, value)?,
                "synth.t_test" => cfg.synth.t_test = parse_num(key, value)?,
                "synth.d" => cfg.synth.d = parse_num(key, value)?,
                "synth.anomaly_rate" => cfg.synth.anomaly_rate = parse_num(key, value)?,
                "synth.segment_plan" => cfg.synth.segment_plan = SynthConfig::parse_plan(value)?,
                "synth.seed" => cfg.synth_seed = parse_num(key, value)?,
                "pool.kinds" => {
                    cfg.pool = value
                        .split(',')
                        .map(|s| DetectorKind::parse(s.trim()))
                        .collect::<Result<_>>()?
                }
                "pool.iforest_trees" => cfg.hyper.iforest_trees = parse_num(key, value)?,
                "pool.iforest_subsample" => cfg.hyper.iforest_subsample = parse_num(key, value)?,
                "pool.ocsvm_nu" => cfg.hyper.ocsvm_nu = parse_num(key, value)?,
                "pool.ocsvm_learning_rate" => cfg.hyper.ocsvm_learning_rate = parse_num(key, value)?,
                "pool.ocsvm_epochs" => cfg.hyper.ocsvm_epochs = parse_num(key, value)?,
                "pool.ae_hidden" => cfg.hyper.ae_hidden = parse_num(key, value)?,
                "pool.ae_bottleneck" => cfg.hyper.ae_bottleneck = parse_num(key, value)?,
                "pool.ae_epochs" => cfg.hyper.ae_epochs = parse_num(key, value)?,
                "pool.ae_learning_rate" => cfg.hyper.ae_learning_rate = parse_num(key, value)?,
                "pool.ae_batch" => cfg.hyper.ae_batch = parse_num(key, value)?,
                "env.contamination" => cfg.contamination = parse_num(key, value)?,
                "env.window" => cfg.window = parse_num(key, value)?,
                "env.reward_tp" => cfg.reward.tp = parse_num(key, value)?,
                "env.reward_tn" => cfg.reward.tn = parse_num(key, value)?,
                "env.reward_fp" => cfg.reward.fp = parse_num::<f64>(key, value)?.abs(),
                "env.reward_fn" => cfg.reward.fn_ = parse_num::<f64>(key, value)?.abs(),
                "env.mask" => cfg.mask = FeatureMask::parse(value)?,
                "agent.hidden" => cfg.agent.hidden_sizes = parse_list(key, value)?,
                "agent.learning_rate" => cfg.agent.learning_rate = parse_num(key, value)?,
                "agent.replay_capacity" => cfg.agent.replay_capacity = parse_num(key, value)?,
                "agent.batch_size" => cfg.agent.batch_size = parse_num(key, value)?,
                "agent.warmup_steps" => cfg.agent.warmup_steps = parse_num(key, value)?,
                "agent.train_frequency" => cfg.agent.train_frequency = parse_num(key, value)?,
                "agent.target_sync" => cfg.agent.target_sync = parse_num(key, value)?,
                "agent.epsilon_final" => cfg.agent.epsilon_final = parse_num(key, value)?,
                "agent.epsilon_fraction" => cfg.agent.epsilon_fraction = parse_num(key, value)?,
                "agent.huber_delta" => cfg.agent.huber_delta = parse_num(key, value)?,
                "agent.total_steps" => cfg.agent.total_steps = parse_num(key, value)?,
                "experiment.seeds" => cfg.seeds = parse_list(key, value)?,
                "experiment.output_dir" => cfg.output_dir = PathBuf::from(value),
                "sweep.fp_values" => {
                    cfg.sweep_fp_values =
                        parse_list::<f64>(key, value)?.iter().map(|v| v.abs()).collect()
                }
                "sweep.fn_values" => {
                    cfg.sweep_fn_values =
                        parse_list::<f64>(key, value)?.iter().map(|v| v.abs()).collect()
                }
                _ => unreachable!("key presence checked above"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        RunConfig::parse(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Full validation before any side effect.
    pub fn validate(&self) -> Result<()> {
        if self.pool.len() < 2 {
            return Err(Error::Config(format!("pool size {} < 2", self.pool.len())));
        }
        if !(self.contamination > 0.0 && self.contamination < 1.0) {
            return Err(Error::Config(format!(
                "env.contamination {} outside (0,1)",
                self.contamination
            )));
        }
        if self.window == 0 {
            return Err(Error::Config("env.window must be >= 1".into()));
        }
        if self.downsample == 0 {
            return Err(Error::Config("data.downsample must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("experiment.seeds must be non-empty".into()));
        }
        self.reward.validate()?;
        self.agent.validate()?;
        self.hyper.validate()?;
        self.synth.validate()?;
        Ok(())
    }

    /// Checked by subcommands that read the CSVs (not at parse time, since
    /// `synth` creates the files a later stage will consume).
    pub fn require_input_paths(&self) -> Result<()> {
        for path in [&self.train_csv, &self.test_csv].into_iter().flatten() {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "referenced path does not exist: {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}
