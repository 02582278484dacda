//! The five-member base-model pool behind a uniform interface: fit on
//! anomaly-free data, then emit one anomaly score per test instance
//! (higher = more anomalous).

mod autoencoder;
mod ecdf;
mod iforest;
mod ocsvm;

pub use autoencoder::AutoencoderModel;
pub use ecdf::EcdfTables;
pub use iforest::IsolationForestModel;
pub use ocsvm::LinearOcsvmModel;

use serde::{Deserialize, Serialize};

use crate::dataio::WindowedDataset;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const MIN_TRAIN_ROWS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Iforest,
    OcsvmSgd,
    Ecod,
    Copod,
    Autoencoder,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::Iforest,
        DetectorKind::OcsvmSgd,
        DetectorKind::Ecod,
        DetectorKind::Copod,
        DetectorKind::Autoencoder,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DetectorKind::Iforest => "iforest",
            DetectorKind::OcsvmSgd => "ocsvm_sgd",
            DetectorKind::Ecod => "ecod",
            DetectorKind::Copod => "copod",
            DetectorKind::Autoencoder => "autoencoder",
        }
    }

    pub fn parse(s: &str) -> Result<DetectorKind> {
        match s {
            "iforest" => Ok(DetectorKind::Iforest),
            "ocsvm_sgd" | "ocsvm" => Ok(DetectorKind::OcsvmSgd),
            "ecod" => Ok(DetectorKind::Ecod),
            "copod" => Ok(DetectorKind::Copod),
            "autoencoder" | "ae" => Ok(DetectorKind::Autoencoder),
            other => Err(Error::Config(format!("unknown detector kind '{other}'"))),
        }
    }

    /// Statistical detectors consume single instances; only the autoencoder
    /// reads multi-row windows.
    pub fn requires_unit_window(&self) -> bool {
        !matches!(self, DetectorKind::Autoencoder)
    }
}

/// Hyperparameters for every pool member; unused fields are ignored by
/// kinds that do not read them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorHyper {
    pub iforest_trees: usize,
    pub iforest_subsample: usize,
    pub ocsvm_nu: f64,
    pub ocsvm_learning_rate: f64,
    pub ocsvm_epochs: usize,
    pub ae_hidden: usize,
    pub ae_bottleneck: usize,
    pub ae_epochs: usize,
    pub ae_learning_rate: f64,
    pub ae_batch: usize,
}

impl Default for DetectorHyper {
    fn default() -> Self {
        DetectorHyper {
            iforest_trees: 100,
            iforest_subsample: 256,
            ocsvm_nu: 0.5,
            ocsvm_learning_rate: 0.01,
            ocsvm_epochs: 20,
            ae_hidden: 0,     // 0 = derive from input dim
            ae_bottleneck: 0, // 0 = derive from input dim
            ae_epochs: 30,
            ae_learning_rate: 1e-3,
            ae_batch: 64,
        }
    }
}

impl DetectorHyper {
    pub fn validate(&self) -> Result<()> {
        if self.iforest_trees == 0 || self.iforest_subsample < 2 {
            return Err(Error::Config("iforest needs trees >= 1 and subsample >= 2".into()));
        }
        if !(self.ocsvm_nu > 0.0 && self.ocsvm_nu <= 1.0) {
            return Err(Error::Config(format!("ocsvm nu {} outside (0,1]", self.ocsvm_nu)));
        }
        if self.ocsvm_learning_rate <= 0.0 || self.ae_learning_rate <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.ocsvm_epochs == 0 || self.ae_epochs == 0 || self.ae_batch == 0 {
            return Err(Error::Config("epoch and batch counts must be positive".into()));
        }
        Ok(())
    }
}

/// A fitted pool member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedDetector {
    Iforest(IsolationForestModel),
    OcsvmSgd(LinearOcsvmModel),
    Ecod(EcdfTables),
    Copod(EcdfTables),
    Autoencoder(AutoencoderModel),
}

impl TrainedDetector {
    pub fn kind(&self) -> DetectorKind {
        match self {
            TrainedDetector::Iforest(_) => DetectorKind::Iforest,
            TrainedDetector::OcsvmSgd(_) => DetectorKind::OcsvmSgd,
            TrainedDetector::Ecod(_) => DetectorKind::Ecod,
            TrainedDetector::Copod(_) => DetectorKind::Copod,
            TrainedDetector::Autoencoder(_) => DetectorKind::Autoencoder,
        }
    }

    /// Window length this model expects at scoring time.
    pub fn window_length(&self) -> usize {
        match self {
            TrainedDetector::Autoencoder(m) => m.window_length,
            _ => 1,
        }
    }
}

pub fn fit(
    kind: DetectorKind,
    train: &WindowedDataset,
    hyper: &DetectorHyper,
    seed: u64,
) -> Result<TrainedDetector> {
    hyper.validate()?;
    if train.n_windows() < MIN_TRAIN_ROWS {
        return Err(Error::Data(format!(
            "{}: {} training rows, need at least {MIN_TRAIN_ROWS}",
            kind.name(),
            train.n_windows()
        )));
    }
    if kind.requires_unit_window() && train.window_length != 1 {
        return Err(Error::Config(format!(
            "{} consumes single instances, got window length {}",
            kind.name(),
            train.window_length
        )));
    }
    Ok(match kind {
        DetectorKind::Iforest => TrainedDetector::Iforest(IsolationForestModel::fit(
            train,
            hyper.iforest_trees,
            hyper.iforest_subsample,
            seed,
        )?),
        DetectorKind::OcsvmSgd => TrainedDetector::OcsvmSgd(LinearOcsvmModel::fit(
            train,
            hyper.ocsvm_nu,
            hyper.ocsvm_learning_rate,
            hyper.ocsvm_epochs,
            seed,
        )?),
        DetectorKind::Ecod => TrainedDetector::Ecod(EcdfTables::fit(train)?),
        DetectorKind::Copod => TrainedDetector::Copod(EcdfTables::fit(train)?),
        DetectorKind::Autoencoder => {
            TrainedDetector::Autoencoder(AutoencoderModel::fit(train, hyper, seed)?)
        }
    })
}

pub fn score(model: &TrainedDetector, test: &WindowedDataset) -> Result<Vec<f64>> {
    if test.window_length != model.window_length() {
        return Err(Error::Shape(format!(
            "{} fitted with window length {}, scoring data has {}",
            model.kind().name(),
            model.window_length(),
            test.window_length
        )));
    }
    let scores = match model {
        TrainedDetector::Iforest(m) => m.score(test)?,
        TrainedDetector::OcsvmSgd(m) => m.score(test)?,
        TrainedDetector::Ecod(m) => m.score_ecod(test)?,
        TrainedDetector::Copod(m) => m.score_copod(test)?,
        TrainedDetector::Autoencoder(m) => m.score(test)?,
    };
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!(
            "{} produced non-finite score {bad}",
            model.kind().name()
        )));
    }
    Ok(scores)
}

/// Raw and scaled scores, threshold and binary labels for one detector over
/// one test sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorOutput {
    pub raw_scores: Vec<f64>,
    pub threshold_raw: f64,
    pub scaled_scores: Vec<f64>,
    pub threshold_scaled: f64,
    pub labels: Vec<u8>,
    pub score_min: f64,
    pub score_max: f64,
}

/// Place the threshold at the (1 - contamination) empirical quantile of the
/// raw scores (linear interpolation between order statistics); instances
/// strictly above it are labeled anomalous.
pub fn threshold_scores(raw_scores: &[f64], contamination: f64) -> Result<DetectorOutput> {
    if raw_scores.is_empty() {
        return Err(Error::Data("cannot threshold an empty score sequence".into()));
    }
    if !(contamination > 0.0 && contamination < 1.0) {
        return Err(Error::Config(format!("contamination {contamination} outside (0,1)")));
    }
    let mut sorted = raw_scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let pos = (1.0 - contamination) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let threshold_raw = if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[n - 1]
    };
    let score_min = sorted[0];
    let score_max = sorted[n - 1];
    let range = score_max - score_min;
    let scale = |v: f64| {
        if range > 0.0 {
            ((v - score_min) / range).clamp(0.0, 1.0)
        } else {
            0.5
        }
    };
    let labels = raw_scores.iter().map(|&s| u8::from(s > threshold_raw)).collect();
    Ok(DetectorOutput {
        scaled_scores: raw_scores.iter().map(|&s| scale(s)).collect(),
        threshold_scaled: scale(threshold_raw),
        threshold_raw,
        raw_scores: raw_scores.to_vec(),
        labels,
        score_min,
        score_max,
    })
}

/// Versioned self-describing JSON for a fitted model.
pub fn serialize(model: &TrainedDetector) -> String {
    let doc = serde_json::json!({
        "format_version": MODEL_FORMAT_VERSION,
        "model": model,
    });
    serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
}

pub fn deserialize(document: &str) -> Result<TrainedDetector> {
    let doc: serde_json::Value = serde_json::from_str(document)
        .map_err(|e| Error::Serialize(format!("corrupt model document: {e}")))?;
    let version = doc
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Serialize("model document missing format_version".into()))?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::Serialize(format!(
            "unsupported model format version {version} (expected {MODEL_FORMAT_VERSION})"
        )));
    }
    let model = doc
        .get("model")
        .ok_or_else(|| Error::Serialize("model document missing 'model'".into()))?;
    serde_json::from_value(model.clone())
        .map_err(|e| Error::Serialize(format!("bad model document: {e}")))
}
