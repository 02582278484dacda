//! Metrics, the multi-seed experiment runner, reward sweeps, the ablation
//! runner, baseline policies and report emission.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{make_windows, make_windows_with_context, TimeSeries};
use crate::detectors::{self, DetectorHyper, DetectorKind, DetectorOutput, TrainedDetector};
use crate::dqnagent::{self, AgentConfig};
use crate::error::{Error, Result};
use crate::mdpenv::{Episode, FeatureMask, PoolObservations, RewardConfig};
use crate::runtime;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Confusion-weighted episode return under a reward configuration.
    pub fn weighted_return(&self, cfg: &RewardConfig) -> f64 {
        cfg.tp * self.tp as f64 + cfg.tn * self.tn as f64
            - cfg.fp * self.fp as f64
            - cfg.fn_ * self.fn_ as f64
    }
}

pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "prediction length {} vs truth length {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut c = ConfusionCounts {
        tp: 0,
        tn: 0,
        fp: 0,
        fn_: 0,
    };
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => return Err(Error::Data("labels must be binary".into())),
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when TP+FP = 0 (precision) or TP+FN = 0 (recall).
    pub undefined_precision: bool,
    pub undefined_recall: bool,
}

pub fn metrics(c: &ConfusionCounts) -> MetricsRecord {
    let undefined_precision = c.tp + c.fp == 0;
    let undefined_recall = c.tp + c.fn_ == 0;
    let precision = if undefined_precision {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    };
    let recall = if undefined_recall {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MetricsRecord {
        precision,
        recall,
        f1,
        undefined_precision,
        undefined_recall,
    }
}

/// Majority vote over the pool: label 1 iff at least ceil(M/2) members say 1.
pub fn majority_vote(labels: &[Vec<u8>]) -> Result<Vec<u8>> {
    let m = labels.len();
    if m == 0 {
        return Err(Error::Data("majority vote over an empty pool".into()));
    }
    let t_len = labels[0].len();
    let quorum = m.div_ceil(2);
    Ok((0..t_len)
        .map(|t| {
            let ones = labels.iter().filter(|l| l[t] == 1).count();
            u8::from(ones >= quorum)
        })
        .collect())
}

/// Evaluation-only upper bound: pick any correct detector when one exists.
pub fn oracle_predictions(labels: &[Vec<u8>], truth: &[u8]) -> Vec<u8> {
    truth
        .iter()
        .enumerate()
        .map(|(t, &y)| {
            if labels.iter().any(|l| l[t] == y) {
                y
            } else {
                1 - y
            }
        })
        .collect()
}

/// Everything needed to fit and score the pool on one dataset.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub train: TimeSeries,
    pub test: TimeSeries,
    pub truth: Vec<u8>,
    pub pool: Vec<DetectorKind>,
    pub hyper: DetectorHyper,
    pub contamination: f64,
    pub ae_window: usize,
}

impl PreparedDataset {
    /// Scale on the training range, extract truth labels, validate the pool.
    pub fn new(
        train: TimeSeries,
        test: TimeSeries,
        pool: Vec<DetectorKind>,
        hyper: DetectorHyper,
        contamination: f64,
        ae_window: usize,
    ) -> Result<PreparedDataset> {
        if pool.len() < 2 {
            return Err(Error::Config(format!("pool size {} < 2", pool.len())));
        }
        let mut seen = std::collections::HashSet::new();
        for k in &pool {
            if !seen.insert(*k) {
                return Err(Error::Config(format!("duplicate pool member {}", k.name())));
            }
        }
        if ae_window == 0 {
            return Err(Error::Config("autoencoder window must be >= 1".into()));
        }
        let truth = test
            .labels
            .clone()
            .ok_or_else(|| Error::Data("test series has no ground-truth labels".into()))?;
        let scaler = crate::dataio::FeatureScaler::fit(&train)?;
        let train_scaled = scaler.apply(&train)?;
        let test_scaled = scaler.apply(&test)?;
        Ok(PreparedDataset {
            train: train_scaled,
            test: test_scaled,
            truth,
            pool,
            hyper,
            contamination,
            ae_window,
        })
    }
}

/// One seed's fitted-and-scored pool over the test sequence.
#[derive(Debug, Clone)]
pub struct ScoredPool {
    pub outputs: Vec<DetectorOutput>,
    pub observations: PoolObservations,
    pub seed: u64,
}

/// Fit every pool member (seed drives detector fitting too), score the test
/// sequence, and threshold at the configured contamination.
pub fn score_pool(prep: &PreparedDataset, seed: u64) -> Result<ScoredPool> {
    let unit_train = make_windows(&prep.train, 1)?;
    let unit_test = make_windows(&prep.test, 1)?;
    let mut outputs = Vec::with_capacity(prep.pool.len());
    for (idx, kind) in prep.pool.iter().enumerate() {
        let detector_seed = seed.wrapping_mul(131).wrapping_add(idx as u64);
        let (train_w, test_w);
        let (train_ref, test_ref) = if kind.requires_unit_window() {
            (&unit_train, &unit_test)
        } else {
            train_w = make_windows(&prep.train, prep.ae_window)?;
            test_w = make_windows_with_context(&prep.train, &prep.test, prep.ae_window)?;
            (&train_w, &test_w)
        };
        let model = detectors::fit(*kind, train_ref, &prep.hyper, detector_seed)?;
        let raw = detectors::score(&model, test_ref)?;
        outputs.push(detectors::threshold_scores(&raw, prep.contamination)?);
    }
    let observations = PoolObservations::build(&outputs)?;
    Ok(ScoredPool {
        outputs,
        observations,
        seed,
    })
}

/// Fit-and-score one pool per seed, in parallel.
pub fn score_pools(prep: &PreparedDataset, seeds: &[u64]) -> Result<Vec<ScoredPool>> {
    let results = runtime::map_ordered(seeds.to_vec(), |seed| score_pool(prep, seed));
    results.into_iter().collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub counts: ConfusionCounts,
    pub metrics: MetricsRecord,
    pub episode_return: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineRow {
    pub name: String,
    pub metrics: MetricsRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision_mean: f64,
    pub precision_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub per_seed: Vec<SeedResult>,
    pub aggregate: Aggregate,
    pub baselines: Vec<BaselineRow>,
    pub reward: RewardConfig,
    pub mask_name: String,
    pub seeds: Vec<u64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn aggregate(per_seed: &[SeedResult]) -> Aggregate {
    let ps: Vec<f64> = per_seed.iter().map(|r| r.metrics.precision).collect();
    let rs: Vec<f64> = per_seed.iter().map(|r| r.metrics.recall).collect();
    let fs: Vec<f64> = per_seed.iter().map(|r| r.metrics.f1).collect();
    let (pm, pstd) = mean_std(&ps);
    let (rm, rstd) = mean_std(&rs);
    let (fm, fstd) = mean_std(&fs);
    Aggregate {
        precision_mean: pm,
        precision_std: pstd,
        recall_mean: rm,
        recall_std: rstd,
        f1_mean: fm,
        f1_std: fstd,
    }
}

/// Train and greedily evaluate one seed; asserts the return-vs-confusion
/// accounting identity on every run.
fn run_seed(
    pool: &ScoredPool,
    truth: &[u8],
    reward: RewardConfig,
    agent: &AgentConfig,
    mask: FeatureMask,
    seed: u64,
) -> Result<SeedResult> {
    let cfg = AgentConfig {
        seed,
        ..agent.clone()
    };
    let mut env = Episode::new(&pool.observations, truth, reward, mask)?;
    let (policy, _) = dqnagent::train(&mut env, &cfg)?;
    let (trace, episode_return) = dqnagent::evaluate_policy(&policy, &mut env)?;
    let pred: Vec<u8> = trace
        .iter()
        .enumerate()
        .map(|(t, tr)| pool.observations.labels[tr.action][t])
        .collect();
    let counts = confusion(&pred, truth)?;
    let expected = counts.weighted_return(&reward);
    if (episode_return - expected).abs() > 1e-9 * expected.abs().max(1.0) {
        return Err(Error::Numeric(format!(
            "episode return {episode_return} disagrees with confusion-weighted sum {expected}"
        )));
    }
    Ok(SeedResult {
        seed,
        counts,
        metrics: metrics(&counts),
        episode_return,
    })
}

fn baseline_rows(pool: &ScoredPool, kinds: &[DetectorKind], truth: &[u8]) -> Result<Vec<BaselineRow>> {
    let labels = &pool.observations.labels;
    let mut rows = Vec::new();
    for (j, kind) in kinds.iter().enumerate() {
        rows.push(BaselineRow {
            name: kind.name().to_string(),
            metrics: metrics(&confusion(&labels[j], truth)?),
        });
    }
    rows.push(BaselineRow {
        name: "majority_vote".to_string(),
        metrics: metrics(&confusion(&majority_vote(labels)?, truth)?),
    });
    // uniform-random policy, averaged over 10 internal draws
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut acc = (0.0, 0.0, 0.0);
    for _ in 0..10 {
        let pred: Vec<u8> = (0..truth.len())
            .map(|t| labels[rng.gen_range(0..labels.len())][t])
            .collect();
        let m = metrics(&confusion(&pred, truth)?);
        acc = (acc.0 + m.precision, acc.1 + m.recall, acc.2 + m.f1);
    }
    rows.push(BaselineRow {
        name: "random_policy".to_string(),
        metrics: MetricsRecord {
            precision: acc.0 / 10.0,
            recall: acc.1 / 10.0,
            f1: acc.2 / 10.0,
            undefined_precision: false,
            undefined_recall: false,
        },
    });
    rows.push(BaselineRow {
        name: "oracle".to_string(),
        metrics: metrics(&confusion(&oracle_predictions(labels, truth), truth)?),
    });
    Ok(rows)
}

/// Full multi-seed experiment over pre-scored pools (one per seed, aligned
/// with `seeds`). Baselines come from the first seed's pool.
pub fn run_experiment_on_pools(
    pools: &[ScoredPool],
    kinds: &[DetectorKind],
    truth: &[u8],
    reward: RewardConfig,
    agent: &AgentConfig,
    mask: FeatureMask,
    seeds: &[u64],
) -> Result<RunReport> {
    if seeds.is_empty() {
        return Err(Error::Config("seed list must be non-empty".into()));
    }
    if pools.len() != seeds.len() {
        return Err(Error::Shape("one scored pool per seed is required".into()));
    }
    reward.validate()?;
    let jobs: Vec<usize> = (0..seeds.len()).collect();
    let results = runtime::map_ordered(jobs, |i| {
        run_seed(&pools[i], truth, reward, agent, mask, seeds[i])
            .map_err(|e| Error::Data(format!("seed {} failed: {e}", seeds[i])))
    });
    let per_seed: Vec<SeedResult> = results.into_iter().collect::<Result<_>>()?;
    Ok(RunReport {
        aggregate: aggregate(&per_seed),
        per_seed,
        baselines: baseline_rows(&pools[0], kinds, truth)?,
        reward,
        mask_name: mask.name().to_string(),
        seeds: seeds.to_vec(),
    })
}

/// Greedy evaluation of already-trained policies (one per seed) on a single
/// scored pool, with the same accounting identity check as training runs.
pub fn evaluate_policies_on_pool(
    pool: &ScoredPool,
    kinds: &[DetectorKind],
    truth: &[u8],
    reward: RewardConfig,
    policies: &[dqnagent::Policy],
    seeds: &[u64],
) -> Result<RunReport> {
    if policies.len() != seeds.len() || policies.is_empty() {
        return Err(Error::Shape("one policy per seed is required".into()));
    }
    reward.validate()?;
    let mut per_seed = Vec::with_capacity(seeds.len());
    for (policy, &seed) in policies.iter().zip(seeds) {
        let mut env = Episode::new(&pool.observations, truth, reward, policy.mask)?;
        let (trace, episode_return) = dqnagent::evaluate_policy(policy, &mut env)?;
        let pred: Vec<u8> = trace
            .iter()
            .enumerate()
            .map(|(t, tr)| pool.observations.labels[tr.action][t])
            .collect();
        let counts = confusion(&pred, truth)?;
        let expected = counts.weighted_return(&reward);
        if (episode_return - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(Error::Numeric(format!(
                "seed {seed}: episode return {episode_return} disagrees with confusion-weighted sum {expected}"
            )));
        }
        per_seed.push(SeedResult {
            seed,
            counts,
            metrics: metrics(&counts),
            episode_return,
        });
    }
    Ok(RunReport {
        aggregate: aggregate(&per_seed),
        per_seed,
        baselines: baseline_rows(pool, kinds, truth)?,
        reward,
        mask_name: policies[0].mask.name().to_string(),
        seeds: seeds.to_vec(),
    })
}

/// Convenience wrapper: fit/score pools per seed, then run the experiment.
pub fn run_experiment(
    prep: &PreparedDataset,
    reward: RewardConfig,
    agent: &AgentConfig,
    mask: FeatureMask,
    seeds: &[u64],
) -> Result<RunReport> {
    let pools = score_pools(prep, seeds)?;
    run_experiment_on_pools(&pools, &prep.pool, &prep.truth, reward, agent, mask, seeds)
}

/// Spearman rank correlation with average ranks on ties. None when either
/// side has zero rank variance.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rank = |vals: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..vals.len()).collect();
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        let mut ranks = vec![0.0; vals.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && vals[idx[j + 1]] == vals[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                ranks[k] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx <= 0.0 || vy <= 0.0 {
        return None;
    }
    Some(cov / (vx.sqrt() * vy.sqrt()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub reward: RewardConfig,
    pub report: RunReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTrend {
    /// Description of the row, e.g. "fn=1.0".
    pub fixed: String,
    /// |penalty| values swept within the row.
    pub penalties: Vec<f64>,
    pub precision_correlation: Option<f64>,
    pub recall_correlation: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    /// Per FN row: precision/recall trends against the FP penalty.
    pub fp_trends: Vec<SweepTrend>,
    /// Per FP column: precision/recall trends against the FN penalty.
    pub fn_trends: Vec<SweepTrend>,
}

/// Full FN x FP grid sweep with Spearman trends of the mean precision and
/// recall against each penalty magnitude, per row and per column. Every
/// cell is constraint-checked before any training starts.
pub fn sweep_grid(
    pools: &[ScoredPool],
    kinds: &[DetectorKind],
    truth: &[u8],
    fn_values: &[f64],
    fp_values: &[f64],
    base_reward: RewardConfig,
    agent: &AgentConfig,
    mask: FeatureMask,
    seeds: &[u64],
) -> Result<SweepReport> {
    let mut grid = Vec::new();
    for &fn_pen in fn_values {
        for &fp_pen in fp_values {
            let reward = RewardConfig {
                fn_: fn_pen,
                fp: fp_pen,
                ..base_reward
            };
            reward.validate().map_err(|e| {
                Error::Config(format!("sweep cell (fn {fn_pen}, fp {fp_pen}) rejected: {e}"))
            })?;
            grid.push(reward);
        }
    }
    let mut cells = Vec::with_capacity(grid.len());
    for reward in grid {
        let report = run_experiment_on_pools(pools, kinds, truth, reward, agent, mask, seeds)?;
        cells.push(SweepCell { reward, report });
    }
    let trend = |selected: Vec<&SweepCell>, penalties: Vec<f64>, fixed: String| {
        let precisions: Vec<f64> = selected
            .iter()
            .map(|c| c.report.aggregate.precision_mean)
            .collect();
        let recalls: Vec<f64> = selected.iter().map(|c| c.report.aggregate.recall_mean).collect();
        SweepTrend {
            fixed,
            precision_correlation: spearman(&penalties, &precisions),
            recall_correlation: spearman(&penalties, &recalls),
            penalties,
        }
    };
    let mut fp_trends = Vec::new();
    if fp_values.len() >= 2 {
        for &fn_pen in fn_values {
            let row: Vec<&SweepCell> = cells.iter().filter(|c| c.reward.fn_ == fn_pen).collect();
            let penalties = row.iter().map(|c| c.reward.fp).collect();
            fp_trends.push(trend(row, penalties, format!("fn={fn_pen}")));
        }
    }
    let mut fn_trends = Vec::new();
    if fn_values.len() >= 2 {
        for &fp_pen in fp_values {
            let col: Vec<&SweepCell> = cells.iter().filter(|c| c.reward.fp == fp_pen).collect();
            let penalties = col.iter().map(|c| c.reward.fn_).collect();
            fn_trends.push(trend(col, penalties, format!("fp={fp_pen}")));
        }
    }
    Ok(SweepReport {
        cells,
        fp_trends,
        fn_trends,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    /// Fixed order: full, drop_pc, drop_dt.
    pub variants: Vec<(String, RunReport)>,
}

/// Three state-mask variants under identical seeds and budgets.
pub fn ablate(
    pools: &[ScoredPool],
    kinds: &[DetectorKind],
    truth: &[u8],
    reward: RewardConfig,
    agent: &AgentConfig,
    seeds: &[u64],
) -> Result<AblationReport> {
    let mut variants = Vec::new();
    for mask in [FeatureMask::full(), FeatureMask::drop_pc(), FeatureMask::drop_dt()] {
        let report = run_experiment_on_pools(pools, kinds, truth, reward, agent, mask, seeds)?;
        variants.push((mask.name().to_string(), report));
    }
    Ok(AblationReport { variants })
}

/// "81.05 (4.14)"-style percentage with std in parentheses.
fn pct(mean: f64, std: f64) -> String {
    format!("{:.2} ({:.2})", mean * 100.0, std * 100.0)
}

pub fn report_csv(report: &RunReport) -> String {
    let mut out = String::from(
        "model,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std,seeds\n",
    );
    for b in &report.baselines {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},1\n",
            b.name, b.metrics.precision, 0.0, b.metrics.recall, 0.0, b.metrics.f1, 0.0
        ));
    }
    let a = &report.aggregate;
    out.push_str(&format!(
        "rlmsad,{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
        a.precision_mean,
        a.precision_std,
        a.recall_mean,
        a.recall_std,
        a.f1_mean,
        a.f1_std,
        report.seeds.len()
    ));
    out
}

pub fn report_markdown(report: &RunReport) -> String {
    let mut out = String::from("| Model | Precision | Recall | F1 |\n|---|---|---|---|\n");
    for b in &report.baselines {
        out.push_str(&format!(
            "| {} | {:.2} | {:.2} | {:.2} |\n",
            b.name,
            b.metrics.precision * 100.0,
            b.metrics.recall * 100.0,
            b.metrics.f1 * 100.0
        ));
    }
    let a = &report.aggregate;
    out.push_str(&format!(
        "| rlmsad | {} | {} | {} |\n",
        pct(a.precision_mean, a.precision_std),
        pct(a.recall_mean, a.recall_std),
        pct(a.f1_mean, a.f1_std)
    ));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<ReportFormat> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format '{other}'"))),
        }
    }
}

pub fn emit_report(report: &RunReport, format: ReportFormat, path: &std::path::Path) -> Result<()> {
    let body = match format {
        ReportFormat::Csv => report_csv(report),
        ReportFormat::Markdown => report_markdown(report),
    };
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Serialize per-seed fitted models once so CLI stages can exchange them.
pub fn fit_pool_models(prep: &PreparedDataset, seed: u64) -> Result<Vec<TrainedDetector>> {
    let unit_train = make_windows(&prep.train, 1)?;
    prep.pool
        .iter()
        .enumerate()
        .map(|(idx, kind)| {
            let detector_seed = seed.wrapping_mul(131).wrapping_add(idx as u64);
            if kind.requires_unit_window() {
                detectors::fit(*kind, &unit_train, &prep.hyper, detector_seed)
            } else {
                let train_w = make_windows(&prep.train, prep.ae_window)?;
                detectors::fit(*kind, &train_w, &prep.hyper, detector_seed)
            }
        })
        .collect()
}
