//! Pipeline CLI: synth -> pretrain -> score -> train -> eval, plus the
//! sweep and ablate experiment drivers. Stages exchange files so long runs
//! can be resumed stage by stage.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use rlmsad::config::{RunConfig, DOCUMENTED_KEYS};
use rlmsad::dataio::{
    self, format_float, generate_synthetic, load_csv, make_windows, make_windows_with_context,
    write_csv, FeatureScaler, TimeSeries,
};
use rlmsad::detectors::{self, DetectorKind, DetectorOutput, TrainedDetector};
use rlmsad::dqnagent::{self, AgentConfig, Policy};
use rlmsad::error::{Error, Result};
use rlmsad::evalharness::{
    ablate, emit_report, evaluate_policies_on_pool, fit_pool_models, sweep_grid, PreparedDataset,
    ReportFormat, ScoredPool,
};
use rlmsad::mdpenv::{Episode, PoolObservations};
use rlmsad::runtime;

const SCORE_FORMAT_VERSION: u32 = 1;

fn keys_help() -> String {
    let mut s = String::from("Config keys (key = value, '#' comments):\n");
    for (key, doc) in DOCUMENTED_KEYS {
        s.push_str(&format!("  {key:<28} {doc}\n"));
    }
    s
}

#[derive(Parser)]
#[command(
    name = "rlmsad",
    version,
    about = "Anomaly detection by learned per-timestep detector selection",
    after_help = keys_help()
)]
struct Cli {
    /// Run configuration file (required by every subcommand).
    #[arg(long, value_name = "PATH", global = true)]
    config: Option<PathBuf>,

    /// Override the configured output directory.
    #[arg(long, value_name = "DIR", global = true)]
    output: Option<PathBuf>,

    /// Cap the worker-thread count.
    #[arg(long, value_name = "N", global = true)]
    jobs: Option<usize>,

    /// Replace the configured seed list (and synth seed) with one seed.
    #[arg(long, value_name = "N", global = true)]
    seed_override: Option<u64>,

    /// Report format: csv or markdown.
    #[arg(long, value_name = "FMT", global = true, default_value = "csv")]
    format: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic benchmark CSVs.
    Synth,
    /// Fit every pool detector on the training data and save the artifacts.
    Pretrain,
    /// Score the test stream with the saved detectors into one score file.
    Score,
    /// Train one selection policy per seed on the score file.
    Train,
    /// Evaluate saved policies and emit the metrics report.
    Eval,
    /// Run the reward-penalty grid sweep.
    Sweep,
    /// Run the state-feature ablation.
    Ablate,
}

// ---------------------------------------------------------------- logging

static LOG_LEVEL: OnceLock<u8> = OnceLock::new();

fn init_log() -> Result<()> {
    let level = match std::env::var("RLMSAD_LOG") {
        Ok(v) => match v.as_str() {
            "error" => 0,
            "info" => 1,
            "debug" => 2,
            other => {
                return Err(Error::Config(format!(
                    "RLMSAD_LOG must be error|info|debug, got '{other}'"
                )))
            }
        },
        Err(_) => 1,
    };
    let _ = LOG_LEVEL.set(level);
    Ok(())
}

fn log_info(msg: &str) {
    if *LOG_LEVEL.get().unwrap_or(&1) >= 1 {
        eprintln!("[info] {msg}");
    }
}

fn log_debug(msg: &str) {
    if *LOG_LEVEL.get().unwrap_or(&1) >= 2 {
        eprintln!("[debug] {msg}");
    }
}

// ------------------------------------------------------------- file utils

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_manifest(dir: &Path, subcommand: &str, cfg: &RunConfig, extra: serde_json::Value) -> Result<()> {
    let mut hasher = Sha256::new();
    hasher.update(cfg.raw.as_bytes());
    let doc = serde_json::json!({
        "subcommand": subcommand,
        "config_sha256": format!("{:x}", hasher.finalize()),
        "seeds": cfg.seeds,
        "extra": extra,
    });
    let body = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Serialize(e.to_string()))?;
    write_text(&dir.join(format!("manifest_{subcommand}.json")), &(body + "\n"))
}

// ------------------------------------------------------------ data access

fn load_dataset(cfg: &RunConfig) -> Result<(TimeSeries, TimeSeries)> {
    match (&cfg.train_csv, &cfg.test_csv) {
        (Some(train_path), Some(test_path)) => {
            cfg.require_input_paths()?;
            let mut train = load_csv(train_path, None)?;
            let mut test = load_csv(test_path, Some(&cfg.label_column))?;
            if cfg.downsample > 1 {
                train = dataio::downsample(&train, cfg.downsample)?;
                test = dataio::downsample(&test, cfg.downsample)?;
            }
            Ok((train, test))
        }
        (None, None) => generate_synthetic(&cfg.synth, cfg.synth_seed),
        _ => Err(Error::Config(
            "data.train_csv and data.test_csv must be set together".into(),
        )),
    }
}

fn prepare(cfg: &RunConfig) -> Result<(TimeSeries, TimeSeries, PreparedDataset)> {
    let (train, test) = load_dataset(cfg)?;
    let prep = PreparedDataset::new(
        train.clone(),
        test.clone(),
        cfg.pool.clone(),
        cfg.hyper.clone(),
        cfg.contamination,
        cfg.window,
    )?;
    Ok((train, test, prep))
}

fn model_path(dir: &Path, kind: DetectorKind) -> PathBuf {
    dir.join(format!("model_{}.json", kind.name()))
}

fn policy_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("policy_seed{seed}.json"))
}

// ------------------------------------------------------------- score file

fn write_score_file(
    path: &Path,
    kinds: &[DetectorKind],
    outputs: &[DetectorOutput],
    truth: &[u8],
    seed: u64,
    contamination: f64,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# score_format,{SCORE_FORMAT_VERSION}\n"));
    out.push_str(&format!("# seed,{seed}\n"));
    out.push_str(&format!("# contamination,{}\n", format_float(contamination)));
    for (kind, o) in kinds.iter().zip(outputs) {
        out.push_str(&format!(
            "# detector,{},threshold_raw,{},threshold_scaled,{},score_min,{},score_max,{}\n",
            kind.name(),
            format_float(o.threshold_raw),
            format_float(o.threshold_scaled),
            format_float(o.score_min),
            format_float(o.score_max),
        ));
    }
    out.push_str("timestep,truth");
    for kind in kinds {
        let n = kind.name();
        out.push_str(&format!(",{n}_raw,{n}_scaled,{n}_label"));
    }
    out.push('\n');
    for t in 0..truth.len() {
        out.push_str(&format!("{t},{}", truth[t]));
        for o in outputs {
            out.push_str(&format!(
                ",{},{},{}",
                format_float(o.raw_scores[t]),
                format_float(o.scaled_scores[t]),
                o.labels[t]
            ));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

struct ScoreFile {
    kinds: Vec<DetectorKind>,
    pool: ScoredPool,
    truth: Vec<u8>,
}

fn parse_meta_line(line: &str, expected: &str) -> Result<Vec<String>> {
    let body = line
        .strip_prefix("# ")
        .ok_or_else(|| Error::Data(format!("score file: expected '# {expected}' line")))?;
    let cells: Vec<String> = body.split(',').map(|s| s.to_string()).collect();
    if cells.first().map(String::as_str) != Some(expected) {
        return Err(Error::Data(format!(
            "score file: expected '{expected}' metadata, got '{}'",
            cells.first().cloned().unwrap_or_default()
        )));
    }
    Ok(cells)
}

fn read_score_file(path: &Path) -> Result<ScoreFile> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let version: u32 = parse_meta_line(
        lines.next().ok_or_else(|| Error::Data("score file: empty".into()))?,
        "score_format",
    )?[1]
        .parse()
        .map_err(|_| Error::Data("score file: bad format version".into()))?;
    if version != SCORE_FORMAT_VERSION {
        return Err(Error::Data(format!(
            "score file: format version {version}, expected {SCORE_FORMAT_VERSION}"
        )));
    }
    let seed: u64 = parse_meta_line(lines.next().unwrap_or(""), "seed")?[1]
        .parse()
        .map_err(|_| Error::Data("score file: bad seed".into()))?;
    let _contamination = parse_meta_line(lines.next().unwrap_or(""), "contamination")?;

    let mut kinds = Vec::new();
    let mut meta: Vec<[f64; 4]> = Vec::new(); // thr_raw, thr_scaled, min, max
    let mut header = None;
    for line in lines.by_ref() {
        if let Some(rest) = line.strip_prefix("# ") {
            let cells: Vec<&str> = rest.split(',').collect();
            if cells.len() != 10 || cells[0] != "detector" {
                return Err(Error::Data(format!("score file: bad detector line '{line}'")));
            }
            kinds.push(DetectorKind::parse(cells[1])?);
            let grab = |label: &str, li: usize, vi: usize| -> Result<f64> {
                if cells[li] != label {
                    return Err(Error::Data(format!("score file: expected '{label}' field")));
                }
                cells[vi]
                    .parse()
                    .map_err(|_| Error::Data(format!("score file: bad {label} value")))
            };
            meta.push([
                grab("threshold_raw", 2, 3)?,
                grab("threshold_scaled", 4, 5)?,
                grab("score_min", 6, 7)?,
                grab("score_max", 8, 9)?,
            ]);
        } else {
            header = Some(line);
            break;
        }
    }
    let header = header.ok_or_else(|| Error::Data("score file: missing column header".into()))?;
    let expected_cols = 2 + 3 * kinds.len();
    if header.split(',').count() != expected_cols {
        return Err(Error::Data(format!(
            "score file: header has {} columns, expected {expected_cols}",
            header.split(',').count()
        )));
    }
    if kinds.len() < 2 {
        return Err(Error::Data("score file: pool size < 2".into()));
    }

    let mut truth = Vec::new();
    let mut raw: Vec<Vec<f64>> = vec![Vec::new(); kinds.len()];
    let mut scaled: Vec<Vec<f64>> = vec![Vec::new(); kinds.len()];
    let mut labels: Vec<Vec<u8>> = vec![Vec::new(); kinds.len()];
    for (row_no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != expected_cols {
            return Err(Error::Data(format!(
                "score file: row {} has {} columns, expected {expected_cols}",
                row_no + 1,
                cells.len()
            )));
        }
        let bad = |what: &str| Error::Data(format!("score file: row {}: bad {what}", row_no + 1));
        truth.push(match cells[1] {
            "0" => 0u8,
            "1" => 1u8,
            _ => return Err(bad("truth label")),
        });
        for j in 0..kinds.len() {
            let base = 2 + 3 * j;
            raw[j].push(cells[base].parse().map_err(|_| bad("raw score"))?);
            scaled[j].push(cells[base + 1].parse().map_err(|_| bad("scaled score"))?);
            labels[j].push(match cells[base + 2] {
                "0" => 0u8,
                "1" => 1u8,
                _ => return Err(bad("detector label")),
            });
        }
    }

    let mut outputs = Vec::with_capacity(kinds.len());
    for j in 0..kinds.len() {
        let [thr_raw, thr_scaled, lo, hi] = meta[j];
        // Labels must be re-derivable from the stored scores and threshold.
        for (t, &r) in raw[j].iter().enumerate() {
            let expect = u8::from(r > thr_raw);
            if labels[j][t] != expect {
                return Err(Error::Data(format!(
                    "score file: {} label at t={t} inconsistent with its threshold",
                    kinds[j].name()
                )));
            }
        }
        outputs.push(DetectorOutput {
            raw_scores: std::mem::take(&mut raw[j]),
            threshold_raw: thr_raw,
            scaled_scores: std::mem::take(&mut scaled[j]),
            threshold_scaled: thr_scaled,
            labels: std::mem::take(&mut labels[j]),
            score_min: lo,
            score_max: hi,
        });
    }
    let observations = PoolObservations::build(&outputs)?;
    Ok(ScoreFile {
        kinds,
        pool: ScoredPool {
            outputs,
            observations,
            seed,
        },
        truth,
    })
}

// ------------------------------------------------------------ subcommands

fn cmd_synth(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let (train, test) = generate_synthetic(&cfg.synth, cfg.synth_seed)?;
    ensure_dir(dir)?;
    write_csv(&train, &dir.join("train.csv"))?;
    write_csv(&test, &dir.join("test.csv"))?;
    let anomalies: usize = test
        .labels
        .as_ref()
        .map(|ls| ls.iter().map(|&l| l as usize).sum())
        .unwrap_or(0);
    write_manifest(dir, "synth", cfg, serde_json::json!({"synth_seed": cfg.synth_seed}))?;
    println!(
        "synth: train.csv T={} test.csv T={} d={} anomalies={} ({:.2}%)",
        train.len(),
        test.len(),
        test.dim(),
        anomalies,
        100.0 * anomalies as f64 / test.len() as f64
    );
    Ok(())
}

fn cmd_pretrain(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let (train, _, prep) = prepare(cfg)?;
    let seed = cfg.seeds[0];
    ensure_dir(dir)?;
    let scaler = FeatureScaler::fit(&train)?;
    let started = Instant::now();
    let models = fit_pool_models(&prep, seed)
        .map_err(|e| Error::Data(format!("pretrain failed: {e}")))?;
    log_debug(&format!("pool fit in {:.2}s", started.elapsed().as_secs_f64()));
    write_text(
        &dir.join("scaler.json"),
        &(serde_json::to_string_pretty(&scaler).map_err(|e| Error::Serialize(e.to_string()))? + "\n"),
    )?;
    for (kind, model) in cfg.pool.iter().zip(&models) {
        let t0 = Instant::now();
        write_text(&model_path(dir, *kind), &detectors::serialize(model))?;
        println!("pretrain: {} fitted and saved ({:.2}s)", kind.name(), t0.elapsed().as_secs_f64());
    }
    write_manifest(dir, "pretrain", cfg, serde_json::json!({"detector_seed_base": seed}))
}

fn cmd_score(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let (train, test, _) = prepare(cfg)?;
    let scaler: FeatureScaler = serde_json::from_str(&read_text(&dir.join("scaler.json"))?)
        .map_err(|e| Error::Serialize(format!("scaler.json: {e}")))?;
    let mut models: Vec<TrainedDetector> = Vec::with_capacity(cfg.pool.len());
    for kind in &cfg.pool {
        let model = detectors::deserialize(&read_text(&model_path(dir, *kind))?)?;
        if model.kind() != *kind {
            return Err(Error::Config(format!(
                "artifact/config pool mismatch: {} holds a {} model",
                model_path(dir, *kind).display(),
                model.kind().name()
            )));
        }
        models.push(model);
    }
    let train_scaled = scaler.apply(&train)?;
    let test_scaled = scaler.apply(&test)?;
    let truth = test
        .labels
        .clone()
        .ok_or_else(|| Error::Data("test series has no ground-truth labels".into()))?;
    let mut outputs = Vec::with_capacity(models.len());
    for model in &models {
        let windows = if model.kind().requires_unit_window() {
            make_windows(&test_scaled, 1)?
        } else {
            make_windows_with_context(&train_scaled, &test_scaled, model.window_length())?
        };
        let raw = detectors::score(model, &windows)?;
        outputs.push(detectors::threshold_scores(&raw, cfg.contamination)?);
    }
    let seed = cfg.seeds[0];
    write_score_file(&dir.join("scores.csv"), &cfg.pool, &outputs, &truth, seed, cfg.contamination)?;
    write_manifest(dir, "score", cfg, serde_json::json!({"detector_seed_base": seed}))?;
    println!(
        "score: scores.csv T={} detectors={} flagged={:?}",
        truth.len(),
        outputs.len(),
        outputs
            .iter()
            .map(|o| o.labels.iter().map(|&l| l as usize).sum::<usize>())
            .collect::<Vec<_>>()
    );
    Ok(())
}

fn cmd_train(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let score = read_score_file(&dir.join("scores.csv"))?;
    let jobs: Vec<u64> = cfg.seeds.clone();
    let pool = &score.pool;
    let truth = &score.truth;
    let results = runtime::map_ordered(jobs, |seed| -> Result<(u64, Policy, f64)> {
        let agent = AgentConfig {
            seed,
            ..cfg.agent.clone()
        };
        let mut env = Episode::new(&pool.observations, truth, cfg.reward, cfg.mask)?;
        let (policy, stats) = dqnagent::train(&mut env, &agent)?;
        let (_, episode_return) = dqnagent::evaluate_policy(&policy, &mut env)?;
        let _ = stats;
        Ok((seed, policy, episode_return))
    });
    for result in results {
        let (seed, policy, episode_return) =
            result.map_err(|e| Error::Data(format!("train failed: {e}")))?;
        let agent = AgentConfig {
            seed,
            ..cfg.agent.clone()
        };
        let body = serde_json::to_string_pretty(&policy.to_json(&agent))
            .map_err(|e| Error::Serialize(e.to_string()))?;
        write_text(&policy_path(dir, seed), &(body + "\n"))?;
        println!("train: seed {seed} greedy return {episode_return:.4}");
    }
    write_manifest(dir, "train", cfg, serde_json::json!({"score_seed": score.pool.seed}))
}

fn cmd_eval(cfg: &RunConfig, dir: &Path, format: ReportFormat) -> Result<()> {
    let score = read_score_file(&dir.join("scores.csv"))?;
    let mut policies = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let doc: serde_json::Value = serde_json::from_str(&read_text(&policy_path(dir, seed))?)
            .map_err(|e| Error::Serialize(format!("policy seed {seed}: {e}")))?;
        policies.push(Policy::from_json(&doc)?);
    }
    let report = evaluate_policies_on_pool(
        &score.pool,
        &score.kinds,
        &score.truth,
        cfg.reward,
        &policies,
        &cfg.seeds,
    )?;
    let name = match format {
        ReportFormat::Csv => "report.csv",
        ReportFormat::Markdown => "report.md",
    };
    emit_report(&report, format, &dir.join(name))?;
    write_manifest(dir, "eval", cfg, serde_json::json!({"score_seed": score.pool.seed}))?;
    let a = &report.aggregate;
    println!(
        "eval: {name} precision {:.4} recall {:.4} f1 {:.4} over {} seeds",
        a.precision_mean,
        a.recall_mean,
        a.f1_mean,
        cfg.seeds.len()
    );
    Ok(())
}

/// Sweep and ablation retrain from the single stored score file, so every
/// run seed shares the pool scored at pretrain time.
fn replicated_pools(pool: &ScoredPool, n: usize) -> Vec<ScoredPool> {
    std::iter::repeat_with(|| pool.clone()).take(n).collect()
}

fn cmd_sweep(cfg: &RunConfig, dir: &Path, format: ReportFormat) -> Result<()> {
    let score = read_score_file(&dir.join("scores.csv"))?;
    let pools = replicated_pools(&score.pool, cfg.seeds.len());
    let report = sweep_grid(
        &pools,
        &score.kinds,
        &score.truth,
        &cfg.sweep_fn_values,
        &cfg.sweep_fp_values,
        cfg.reward,
        &cfg.agent,
        cfg.mask,
        &cfg.seeds,
    )?;
    let sweep_dir = dir.join("sweep");
    let name = match format {
        ReportFormat::Csv => "report.csv",
        ReportFormat::Markdown => "report.md",
    };
    for cell in &report.cells {
        let cell_dir = sweep_dir.join(format!("fn_{}_fp_{}", cell.reward.fn_, cell.reward.fp));
        ensure_dir(&cell_dir)?;
        emit_report(&cell.report, format, &cell_dir.join(name))?;
    }
    let mut trends = String::from("axis,fixed,spearman_precision,spearman_recall\n");
    let fmt_rho = |rho: Option<f64>| rho.map_or("nan".to_string(), |v| format!("{v:.6}"));
    for trend in &report.fp_trends {
        trends.push_str(&format!(
            "fp,{},{},{}\n",
            trend.fixed,
            fmt_rho(trend.precision_correlation),
            fmt_rho(trend.recall_correlation)
        ));
    }
    for trend in &report.fn_trends {
        trends.push_str(&format!(
            "fn,{},{},{}\n",
            trend.fixed,
            fmt_rho(trend.precision_correlation),
            fmt_rho(trend.recall_correlation)
        ));
    }
    write_text(&sweep_dir.join("trends.csv"), &trends)?;
    write_manifest(dir, "sweep", cfg, serde_json::json!({"cells": report.cells.len()}))?;
    println!(
        "sweep: {} cells under {} plus trends.csv",
        report.cells.len(),
        sweep_dir.display()
    );
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig, dir: &Path, format: ReportFormat) -> Result<()> {
    let score = read_score_file(&dir.join("scores.csv"))?;
    let pools = replicated_pools(&score.pool, cfg.seeds.len());
    let report = ablate(
        &pools,
        &score.kinds,
        &score.truth,
        cfg.reward,
        &cfg.agent,
        &cfg.seeds,
    )?;
    let ablation_dir = dir.join("ablation");
    let name = match format {
        ReportFormat::Csv => "report.csv",
        ReportFormat::Markdown => "report.md",
    };
    let mut summary = String::from("mask,f1_mean,f1_std\n");
    for (mask_name, run) in &report.variants {
        let variant_dir = ablation_dir.join(mask_name);
        ensure_dir(&variant_dir)?;
        emit_report(run, format, &variant_dir.join(name))?;
        summary.push_str(&format!(
            "{mask_name},{:.6},{:.6}\n",
            run.aggregate.f1_mean, run.aggregate.f1_std
        ));
    }
    write_text(&ablation_dir.join("summary.csv"), &summary)?;
    write_manifest(dir, "ablate", cfg, serde_json::json!({"variants": report.variants.len()}))?;
    println!("ablate: {} variants under {}", report.variants.len(), ablation_dir.display());
    Ok(())
}

// ------------------------------------------------------------------ entry

fn run(cli: Cli) -> Result<()> {
    init_log()?;
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let format = ReportFormat::parse(&cli.format)?;
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(dir) = cli.output {
        cfg.output_dir = dir;
    }
    if let Some(seed) = cli.seed_override {
        cfg.seeds = vec![seed];
        cfg.synth_seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be >= 1".into()));
        }
        runtime::limit_workers(jobs);
    }
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    log_info(&format!(
        "config {} -> {} (seeds {:?})",
        config_path.display(),
        dir.display(),
        cfg.seeds
    ));
    match cli.command {
        Command::Synth => cmd_synth(&cfg, &dir),
        Command::Pretrain => cmd_pretrain(&cfg, &dir),
        Command::Score => cmd_score(&cfg, &dir),
        Command::Train => cmd_train(&cfg, &dir),
        Command::Eval => cmd_eval(&cfg, &dir, format),
        Command::Sweep => cmd_sweep(&cfg, &dir, format),
        Command::Ablate => cmd_ablate(&cfg, &dir, format),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!(
                "{}",
                serde_json::json!({"error": e.to_string(), "exit_code": code})
            );
            ExitCode::from(code as u8)
        }
    }
}
