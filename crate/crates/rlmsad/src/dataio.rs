//! Loading, cleaning, downsampling, windowing, scaling and splitting of
//! multivariate time series, plus the synthetic complementary-detector
//! benchmark generator.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Ordered multivariate sequence with optional ground-truth labels.
/// Values are stored row-major, `t * d` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    t: usize,
    d: usize,
    pub labels: Option<Vec<u8>>,
    pub feature_names: Vec<String>,
}

impl TimeSeries {
    pub fn new(
        values: Vec<f64>,
        t: usize,
        d: usize,
        labels: Option<Vec<u8>>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if t == 0 || d == 0 {
            return Err(Error::Data("time series must have T >= 1 and d >= 1".into()));
        }
        if values.len() != t * d {
            return Err(Error::Shape(format!(
                "expected {} values for {}x{} series, got {}",
                t * d,
                t,
                d,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value {v} in series")));
        }
        if let Some(labels) = &labels {
            if labels.len() != t {
                return Err(Error::Shape(format!(
                    "labels length {} does not match T={}",
                    labels.len(),
                    t
                )));
            }
            if let Some(l) = labels.iter().find(|&&l| l > 1) {
                return Err(Error::Data(format!("label value {l} outside {{0,1}}")));
            }
        }
        if feature_names.len() != d {
            return Err(Error::Shape(format!(
                "{} feature names for d={}",
                feature_names.len(),
                d
            )));
        }
        Ok(TimeSeries {
            values,
            t,
            d,
            labels,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column-extracted copy, mainly for per-feature statistics.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.t).map(|i| self.values[i * self.d + j]).collect()
    }
}

/// Sliding-window view of a series. Window `i` covers rows `i..i+w`,
/// its target is the last row, at absolute index `i + w - 1`.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    pub windows: Vec<f64>, // n * w * d, row-major
    pub targets_index: Vec<usize>,
    pub target_labels: Option<Vec<u8>>,
    pub window_length: usize,
    pub dim: usize,
}

impl WindowedDataset {
    pub fn n_windows(&self) -> usize {
        self.targets_index.len()
    }

    pub fn flattened_dim(&self) -> usize {
        self.window_length * self.dim
    }

    pub fn window(&self, i: usize) -> &[f64] {
        let fd = self.flattened_dim();
        &self.windows[i * fd..(i + 1) * fd]
    }

    /// Last row of window `i` (the target instance).
    pub fn target_row(&self, i: usize) -> &[f64] {
        let fd = self.flattened_dim();
        &self.windows[i * fd + (self.window_length - 1) * self.dim..(i + 1) * fd]
    }
}

/// Per-feature min-max ranges fitted on training data.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureScaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

pub const SCALER_CLAMP_LO: f64 = -0.05;
pub const SCALER_CLAMP_HI: f64 = 1.05;

impl FeatureScaler {
    pub fn fit(train: &TimeSeries) -> Result<FeatureScaler> {
        if train.len() == 0 {
            return Err(Error::Data("cannot fit scaler on empty series".into()));
        }
        let d = train.dim();
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for i in 0..train.len() {
            for (j, &v) in train.row(i).iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        Ok(FeatureScaler { mins, maxs })
    }

    pub fn scale_value(&self, j: usize, v: f64) -> f64 {
        let (lo, hi) = (self.mins[j], self.maxs[j]);
        if hi <= lo {
            return 0.5; // constant feature
        }
        ((v - lo) / (hi - lo)).clamp(SCALER_CLAMP_LO, SCALER_CLAMP_HI)
    }

    pub fn apply(&self, series: &TimeSeries) -> Result<TimeSeries> {
        if series.dim() != self.mins.len() {
            return Err(Error::Shape(format!(
                "scaler fitted on d={}, series has d={}",
                self.mins.len(),
                series.dim()
            )));
        }
        let d = series.dim();
        let values = series
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| self.scale_value(k % d, v))
            .collect();
        TimeSeries::new(
            values,
            series.len(),
            d,
            series.labels.clone(),
            series.feature_names.clone(),
        )
    }
}

/// Parse a CSV file with a required header row. When `label_column` names a
/// header entry, that column becomes the label vector and is removed from
/// the features.
pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<TimeSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let n_cols = names.len();
    let label_idx = match label_column {
        Some(name) => Some(names.iter().position(|n| n == name).ok_or_else(|| {
            Error::Data(format!("{}: label column '{name}' not in header", path.display()))
        })?),
        None => None,
    };
    if label_idx.is_some() && n_cols < 2 {
        return Err(Error::Data(format!(
            "{}: label column leaves no feature columns",
            path.display()
        )));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut t = 0usize;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_cols {
            return Err(Error::Data(format!(
                "{}: row {} has {} columns, header has {}",
                path.display(),
                line_no + 1,
                cells.len(),
                n_cols
            )));
        }
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {} column {} ('{}'): not a number",
                    path.display(),
                    line_no + 1,
                    col + 1,
                    cell.trim()
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}: row {} column {}: non-finite value '{}'",
                    path.display(),
                    line_no + 1,
                    col + 1,
                    cell.trim()
                )));
            }
            if Some(col) == label_idx {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Data(format!(
                        "{}: row {} column {}: label {} outside {{0,1}}",
                        path.display(),
                        line_no + 1,
                        col + 1,
                        v
                    )));
                }
                labels.push(v as u8);
            } else {
                values.push(v);
            }
        }
        t += 1;
    }
    let d = if label_idx.is_some() { n_cols - 1 } else { n_cols };
    let feature_names: Vec<String> = names
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, n)| n.clone())
        .collect();
    TimeSeries::new(
        values,
        t,
        d,
        label_idx.map(|_| labels),
        feature_names,
    )
}

/// Write a series as CSV. Labels, when present, go in a trailing `label`
/// column. Byte output is deterministic.
pub fn write_csv(series: &TimeSeries, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    let mut header = series.feature_names.join(",");
    if series.labels.is_some() {
        header.push_str(",label");
    }
    writeln!(out, "{header}").unwrap();
    for i in 0..series.len() {
        let row: Vec<String> = series.row(i).iter().map(|v| format_float(*v)).collect();
        let mut line = row.join(",");
        if let Some(labels) = &series.labels {
            line.push_str(&format!(",{}", labels[i]));
        }
        writeln!(out, "{line}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Shortest round-trippable decimal representation.
pub fn format_float(v: f64) -> String {
    let s = format!("{v}");
    // Keep an explicit fractional marker so parsing stays f64.
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

/// Block-mean downsampling. Each output row is the mean of one non-overlapping
/// block of `block` rows; the trailing partial block is dropped. A label block
/// maps to 1 if any member is 1.
pub fn downsample(series: &TimeSeries, block: usize) -> Result<TimeSeries> {
    if block == 0 {
        return Err(Error::Data("downsample block must be >= 1".into()));
    }
    let t_out = series.len() / block;
    if t_out == 0 {
        return Err(Error::Data(format!(
            "downsample block {} exceeds series length {}",
            block,
            series.len()
        )));
    }
    let d = series.dim();
    let mut values = Vec::with_capacity(t_out * d);
    for b in 0..t_out {
        let mut acc = vec![0.0; d];
        for i in b * block..(b + 1) * block {
            for (j, &v) in series.row(i).iter().enumerate() {
                acc[j] += v;
            }
        }
        values.extend(acc.into_iter().map(|s| s / block as f64));
    }
    let labels = series.labels.as_ref().map(|ls| {
        (0..t_out)
            .map(|b| {
                let any = ls[b * block..(b + 1) * block].iter().any(|&l| l == 1);
                u8::from(any)
            })
            .collect()
    });
    TimeSeries::new(values, t_out, d, labels, series.feature_names.clone())
}

/// Stride-1 sliding windows of length `w`. N = T - W + 1.
pub fn make_windows(series: &TimeSeries, w: usize) -> Result<WindowedDataset> {
    if w == 0 {
        return Err(Error::Data("window length must be >= 1".into()));
    }
    if w > series.len() {
        return Err(Error::Data(format!(
            "window length {} exceeds series length {}",
            w,
            series.len()
        )));
    }
    let n = series.len() - w + 1;
    let d = series.dim();
    let mut windows = Vec::with_capacity(n * w * d);
    let mut targets_index = Vec::with_capacity(n);
    for i in 0..n {
        for r in i..i + w {
            windows.extend_from_slice(series.row(r));
        }
        targets_index.push(i + w - 1);
    }
    let target_labels = series
        .labels
        .as_ref()
        .map(|ls| targets_index.iter().map(|&i| ls[i]).collect());
    Ok(WindowedDataset {
        windows,
        targets_index,
        target_labels,
        window_length: w,
        dim: d,
    })
}

/// Windows over `test` where early windows borrow their leading rows from the
/// tail of `context`, so every test timestep gets a window ending at it.
pub fn make_windows_with_context(
    context: &TimeSeries,
    test: &TimeSeries,
    w: usize,
) -> Result<WindowedDataset> {
    if w == 0 {
        return Err(Error::Data("window length must be >= 1".into()));
    }
    if context.dim() != test.dim() {
        return Err(Error::Shape("context and test dimensionality differ".into()));
    }
    if w > 1 && context.len() < w - 1 {
        return Err(Error::Data(format!(
            "context length {} too short for window length {}",
            context.len(),
            w
        )));
    }
    let d = test.dim();
    let n = test.len();
    let mut windows = Vec::with_capacity(n * w * d);
    let mut targets_index = Vec::with_capacity(n);
    for i in 0..n {
        // rows (i - w + 1)..=i in the virtual [context tail | test] sequence
        for k in 0..w {
            let pos = i as isize - (w - 1 - k) as isize;
            if pos < 0 {
                let ctx_row = (context.len() as isize + pos) as usize;
                windows.extend_from_slice(context.row(ctx_row));
            } else {
                windows.extend_from_slice(test.row(pos as usize));
            }
        }
        targets_index.push(i);
    }
    Ok(WindowedDataset {
        windows,
        targets_index,
        target_labels: test.labels.clone(),
        window_length: w,
        dim: d,
    })
}

/// Relative weight of one anomaly profile in the synthetic plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyProfile {
    /// Large short-lived point spikes on a single feature.
    Spike,
    /// Sustained shift of the operating point into a low-density region.
    DensityShift,
    /// Cross-feature correlation break with near-normal marginals.
    CorrelatedDrift,
}

impl AnomalyProfile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "spike" => Ok(AnomalyProfile::Spike),
            "shift" => Ok(AnomalyProfile::DensityShift),
            "drift" => Ok(AnomalyProfile::CorrelatedDrift),
            other => Err(Error::Config(format!(
                "unknown anomaly profile '{other}' (expected spike|shift|drift)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub t_train: usize,
    pub t_test: usize,
    pub d: usize,
    pub anomaly_rate: f64,
    /// (profile, weight) pairs; weights are normalized internally.
    pub segment_plan: Vec<(AnomalyProfile, f64)>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            t_train: 20000,
            t_test: 5000,
            d: 5,
            anomaly_rate: 0.12,
            segment_plan: vec![
                (AnomalyProfile::Spike, 1.0),
                (AnomalyProfile::DensityShift, 1.0),
                (AnomalyProfile::CorrelatedDrift, 1.0),
            ],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Config("synthetic generator requires d >= 2".into()));
        }
        if !(self.anomaly_rate > 0.0 && self.anomaly_rate < 0.5) {
            return Err(Error::Config(format!(
                "anomaly_rate {} outside (0, 0.5)",
                self.anomaly_rate
            )));
        }
        if self.t_train < 100 || self.t_test < 100 {
            return Err(Error::Config("t_train and t_test must be >= 100".into()));
        }
        if self.segment_plan.is_empty() || self.segment_plan.iter().all(|(_, w)| *w <= 0.0) {
            return Err(Error::Config("segment_plan needs at least one positive weight".into()));
        }
        Ok(())
    }

    /// Parse a plan string like "spike:1,shift:1,drift:1".
    pub fn parse_plan(s: &str) -> Result<Vec<(AnomalyProfile, f64)>> {
        let mut plan = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (name, weight) = match part.split_once(':') {
                Some((n, w)) => {
                    let weight: f64 = w.trim().parse().map_err(|_| {
                        Error::Config(format!("bad segment weight '{w}' in plan"))
                    })?;
                    (n.trim(), weight)
                }
                None => (part, 1.0),
            };
            plan.push((AnomalyProfile::parse(name)?, weight));
        }
        if plan.is_empty() {
            return Err(Error::Config("empty segment plan".into()));
        }
        Ok(plan)
    }
}

struct LatentProcess {
    /// Per-feature loading on the shared latent signal.
    loadings: Vec<f64>,
    offsets: Vec<f64>,
    periods: Vec<f64>,
    noise_std: f64,
}

impl LatentProcess {
    fn new(d: usize, rng: &mut ChaCha8Rng) -> LatentProcess {
        LatentProcess {
            loadings: (0..d).map(|_| rng.gen_range(0.6..1.4)).collect(),
            offsets: (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            periods: (0..d).map(|_| rng.gen_range(40.0..200.0)).collect(),
            noise_std: 0.08,
        }
    }

    /// Shared slow latent plus a per-feature seasonal term and small noise.
    fn row(&self, t: usize, latent: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.loadings.len())
            .map(|j| {
                let seasonal = 0.3 * (2.0 * std::f64::consts::PI * t as f64 / self.periods[j]).sin();
                self.loadings[j] * latent
                    + self.offsets[j]
                    + seasonal
                    + gauss(rng) * self.noise_std
            })
            .collect()
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniforms per call keeps the stream simple to reason about.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn latent_walk(t: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Mean-reverting walk bounded around 0; gives the series a wandering level.
    let mut out = Vec::with_capacity(t);
    let mut x = 0.0f64;
    for _ in 0..t {
        x = 0.995 * x + 0.05 * gauss(rng);
        out.push(x);
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct PlannedSegment {
    start: usize,
    len: usize,
    profile: AnomalyProfile,
}

/// Lay out anomaly segments over the test timeline so the realized anomaly
/// count equals round(rate * t_test) and segments never touch.
fn plan_segments(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<PlannedSegment>> {
    let budget = (cfg.anomaly_rate * cfg.t_test as f64).round() as usize;
    let total_w: f64 = cfg.segment_plan.iter().map(|(_, w)| w.max(0.0)).sum();
    let mut segs: Vec<(AnomalyProfile, usize)> = Vec::new();
    let mut assigned = 0usize;
    for (idx, (profile, w)) in cfg.segment_plan.iter().enumerate() {
        let mut share = (budget as f64 * w.max(0.0) / total_w).round() as usize;
        if idx == cfg.segment_plan.len() - 1 {
            share = budget.saturating_sub(assigned);
        }
        assigned += share;
        let seg_len = match profile {
            AnomalyProfile::Spike => 3,
            AnomalyProfile::DensityShift => 25,
            AnomalyProfile::CorrelatedDrift => 40,
        };
        let mut remaining = share;
        while remaining > 0 {
            let len = seg_len.min(remaining);
            segs.push((*profile, len));
            remaining -= len;
        }
    }
    // Deterministic interleave so profiles spread over the timeline.
    let mut ordered: Vec<(AnomalyProfile, usize)> = Vec::with_capacity(segs.len());
    while !segs.is_empty() {
        let i = rng.gen_range(0..segs.len());
        ordered.push(segs.remove(i));
    }
    let anomalous: usize = ordered.iter().map(|(_, l)| l).sum();
    let normal = cfg
        .t_test
        .checked_sub(anomalous)
        .ok_or_else(|| Error::Config("anomaly budget exceeds test length".into()))?;
    let n_gaps = ordered.len() + 1;
    if normal < n_gaps {
        return Err(Error::Config("test series too short for the segment plan".into()));
    }
    let base_gap = normal / n_gaps;
    let mut extra = normal % n_gaps;
    let mut cursor = 0usize;
    let mut planned = Vec::with_capacity(ordered.len());
    for (profile, len) in ordered {
        cursor += base_gap + usize::from(extra > 0);
        extra = extra.saturating_sub(1);
        planned.push(PlannedSegment {
            start: cursor,
            len,
            profile,
        });
        cursor += len;
    }
    Ok(planned)
}

/// Length of the ambiguous events planted by [`generate_synthetic`].
pub const AMBIGUOUS_EVENT_LEN: usize = 6;

/// Generate the complementary-detector benchmark: anomaly-free training data
/// and a labeled test stream whose anomaly segments come in three profiles,
/// each best seen by a different detector family.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<(TimeSeries, TimeSeries)> {
    let (train, test, _) = generate_synthetic_events(cfg, seed)?;
    Ok((train, test))
}

/// Like [`generate_synthetic`] but also returns the ambiguous-event positions
/// as (start, is_real_fault) pairs, for benchmark introspection.
pub fn generate_synthetic_events(
    cfg: &SynthConfig,
    seed: u64,
) -> Result<(TimeSeries, TimeSeries, Vec<(usize, bool)>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let process = LatentProcess::new(cfg.d, &mut rng);
    let feature_names: Vec<String> = (0..cfg.d).map(|j| format!("f{j}")).collect();

    let latent_train = latent_walk(cfg.t_train, &mut rng);
    let mut train_values = Vec::with_capacity(cfg.t_train * cfg.d);
    for (t, &l) in latent_train.iter().enumerate() {
        train_values.extend(process.row(t, l, &mut rng));
    }
    let train = TimeSeries::new(train_values, cfg.t_train, cfg.d, None, feature_names.clone())?;

    // Part of the anomaly budget goes to "ambiguous" events planted further
    // down; the planned clear segments cover the remainder.
    const AMB_LEN: usize = AMBIGUOUS_EVENT_LEN;
    const AMB_TRUE_FRACTION: f64 = 0.175;
    let n_amb_target = (cfg.t_test / 125).max(1);
    let n_amb_true = ((AMB_TRUE_FRACTION * n_amb_target as f64).round() as usize).min(n_amb_target);
    let budget = (cfg.anomaly_rate * cfg.t_test as f64).round() as usize;
    let mut seg_cfg = cfg.clone();
    seg_cfg.anomaly_rate =
        budget.saturating_sub(n_amb_true * AMB_LEN).max(1) as f64 / cfg.t_test as f64;

    let segments = plan_segments(&seg_cfg, &mut rng)?;
    let latent_test = latent_walk(cfg.t_test, &mut rng);
    let mut labels = vec![0u8; cfg.t_test];
    let mut test_values = Vec::with_capacity(cfg.t_test * cfg.d);
    // Per-segment drift parameters are drawn up front so row generation stays
    // a single forward pass.
    let mut seg_of = vec![None::<usize>; cfg.t_test];
    for (si, seg) in segments.iter().enumerate() {
        for t in seg.start..(seg.start + seg.len).min(cfg.t_test) {
            seg_of[t] = Some(si);
            labels[t] = 1;
        }
    }
    // Clear segments are blatant: every detector family has a fair shot.
    let seg_params: Vec<(usize, f64)> = segments
        .iter()
        .map(|_| {
            let feat = rng.gen_range(0..cfg.d);
            let magnitude = rng.gen_range(1.5..1.8);
            (feat, magnitude)
        })
        .collect();

    // Ambiguous events: stuck-at episodes where the sensors freeze on a fixed
    // off-nominal reading (latent, seasonality and noise all drop out). A
    // fixed fraction of them are genuine faults (label 1); the rest are
    // harmless disturbances with exactly the same reading. Detectors score
    // the whole cluster alike, so whether trusting those alarms pays off
    // depends purely on the FP/FN penalty balance.
    const AMB_STRENGTH: f64 = 1.2;
    let mut amb_of = vec![None::<usize>; cfg.t_test];
    let mut amb_starts: Vec<usize> = Vec::new();
    {
        let mut gaps: Vec<(usize, usize)> = Vec::new();
        let mut prev_end = 0usize;
        for seg in &segments {
            gaps.push((prev_end, seg.start));
            prev_end = seg.start + seg.len;
        }
        gaps.push((prev_end, cfg.t_test));
        for (gap_start, gap_end) in gaps {
            if amb_starts.len() == n_amb_target {
                break;
            }
            // keep a 3-step buffer to the neighbouring anomaly segments
            if gap_end.saturating_sub(gap_start) < AMB_LEN + 6 {
                continue;
            }
            let start = gap_start + 3 + rng.gen_range(0..(gap_end - gap_start - AMB_LEN - 6 + 1));
            let ei = amb_starts.len();
            for t in start..start + AMB_LEN {
                amb_of[t] = Some(ei);
            }
            amb_starts.push(start);
        }
    }
    // Exactly round(fraction * planted) events are real faults; which ones is
    // decided by a seeded shuffle so the mix spreads over the timeline.
    let planted = amb_starts.len();
    let n_true = ((AMB_TRUE_FRACTION * planted as f64).round() as usize).min(planted);
    let mut amb_truth = vec![false; planted];
    for flag in amb_truth.iter_mut().take(n_true) {
        *flag = true;
    }
    for k in (1..planted).rev() {
        let pick = rng.gen_range(0..=k);
        amb_truth.swap(k, pick);
    }
    for (ei, &start) in amb_starts.iter().enumerate() {
        if amb_truth[ei] {
            for t in start..(start + AMB_LEN).min(cfg.t_test) {
                labels[t] = 1;
            }
        }
    }

    // One profile renderer shared by clear segments and ambiguous events.
    let apply_profile = |row: &mut [f64],
                         t: usize,
                         seg: &PlannedSegment,
                         si: usize,
                         feat: usize,
                         mag: f64,
                         strength: f64,
                         latent: f64,
                         rng: &mut ChaCha8Rng| {
        match seg.profile {
            AnomalyProfile::Spike => {
                // One feature jumps far outside the normal envelope.
                let sign = if (t + si) % 2 == 0 { 1.0 } else { -1.0 };
                row[feat] += sign * 6.0 * mag * strength;
            }
            AnomalyProfile::DensityShift => {
                // The whole operating point moves by a moderate offset;
                // still inside the global range, but off the dense region.
                for (j, v) in row.iter_mut().enumerate() {
                    *v += 1.1 * mag * strength * if j % 2 == 0 { 1.0 } else { -1.0 };
                }
            }
            AnomalyProfile::CorrelatedDrift => {
                // Marginals stay plausible but cross-feature structure
                // breaks: half the features blend toward an independent
                // latent, fully replacing it at strength 1.
                let rogue = 1.4 * mag * ((t - seg.start) as f64 / seg.len as f64 - 0.5);
                for (j, v) in row.iter_mut().enumerate() {
                    if j % 2 == 1 {
                        let replacement = process.offsets[j] - process.loadings[j] * latent
                            + rogue * process.loadings[j]
                            + gauss(rng) * process.noise_std;
                        *v = (1.0 - strength) * *v + strength * replacement;
                    }
                }
            }
        }
    };

    for t in 0..cfg.t_test {
        let mut row = process.row(t, latent_test[t], &mut rng);
        if let Some(si) = seg_of[t] {
            let seg = segments[si];
            let (feat, mag) = seg_params[si];
            apply_profile(&mut row, t, &seg, si, feat, mag, 1.0, latent_test[t], &mut rng);
        } else if amb_of[t].is_some() {
            for (j, v) in row.iter_mut().enumerate() {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                *v = process.offsets[j] + AMB_STRENGTH * sign;
            }
        }
        test_values.extend(row);
    }
    let test = TimeSeries::new(test_values, cfg.t_test, cfg.d, Some(labels), feature_names)?;
    let events = amb_starts.iter().copied().zip(amb_truth).collect();
    Ok((train, test, events))
}
