//! End-to-end experiment: generate locked instances, train one model per
//! held-out design, attack the held-out instances, and score the result.
//!
//! On-disk layout under `<output_dir>/<SCHEME>/`:
//!
//! ```text
//! census.json                      instance list and skipped settings
//! <design>/original.bench
//! <design>/<K>_<h>_<seed>/         locked.bench labels.csv meta.json secret.json
//! dataset/                         encoded graphs (see graph::write_dataset)
//! models/<test design>/            model.json.gz history.csv fold.json
//! attack/<design>/<K>_<h>_<seed>/  predictions.csv rectified.csv
//!                                  rectification_log.csv recovered.bench
//! report.json report.csv           evaluator output
//! timing.json                      wall-clock seconds per stage
//! ```
//!
//! The attack stage reads files only through an [`AccessLog`], and only
//! `locked.bench` plus the checkpoint. Labels, metadata and keys are read by
//! the evaluator.

mod attack;
mod config;
mod gen;
mod report;
mod train;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use attack::{attack_stage, cmd_attack, evaluate_stage, AttackOutcome};
pub use config::{BenchmarkRef, BenchmarkSource, ConfigError, ExperimentConfig, VerifyConfig, VENDORED_PREFIX};
pub use gen::{cmd_gen_dataset, Census, GenOutcome, InstanceEntry, Secret, Skipped};
pub use report::{
    aggregate, cmd_report, report_csv, AggregateReport, AttackReport, ClassScores, DesignReport, InstanceResult,
    MetricsSummary, RectificationSummary, Summary, REPORT_SCHEMA_VERSION,
};
pub use train::{cmd_train, FoldRecord};

use crate::labels::Scheme;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("dataset generation: {0}")]
    Dataset(String),
    #[error("training: {0}")]
    Train(String),
    #[error("attack stage: {0}")]
    Attack(String),
    #[error("verification: {0}")]
    Verification(String),
    #[error("report: {0}")]
    Report(String),
}

impl PipelineError {
    /// 1 for configuration errors, 3 for verification failures, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Verification(_) => 3,
            _ => 2,
        }
    }
}

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    write_file(path, text + "\n")
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

/// Paths of one scheme's experiment directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(output_dir: &Path, scheme: Scheme) -> Self {
        Layout { root: output_dir.join(scheme.name()) }
    }

    pub fn of(cfg: &ExperimentConfig) -> Self {
        Layout { root: cfg.scheme_dir() }
    }

    pub fn census(&self) -> PathBuf {
        self.root.join("census.json")
    }

    pub fn original(&self, design: &str) -> PathBuf {
        self.root.join(design).join("original.bench")
    }

    pub fn instance(&self, design: &str, id: &str) -> PathBuf {
        self.root.join(design).join(id)
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn model_dir(&self, test_design: &str) -> PathBuf {
        self.root.join("models").join(test_design)
    }

    pub fn checkpoint(&self, test_design: &str) -> PathBuf {
        self.model_dir(test_design).join("model.json.gz")
    }

    pub fn attack(&self, design: &str, id: &str) -> PathBuf {
        self.root.join("attack").join(design).join(id)
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn report_csv(&self) -> PathBuf {
        self.root.join("report.csv")
    }

    pub fn timing(&self) -> PathBuf {
        self.root.join("timing.json")
    }

    /// Adds `entries` to timing.json, keeping what other stages wrote.
    pub fn record_timing(&self, entries: &[(String, f64)]) -> Result<(), PipelineError> {
        let path = self.timing();
        let mut t: BTreeMap<String, f64> = if path.is_file() { read_json(&path)? } else { BTreeMap::new() };
        for (k, v) in entries {
            t.insert(k.clone(), *v);
        }
        write_json(&path, &t)
    }
}

/// Records every file read through it. The attack stage gets one of these
/// and no other way to reach the disk.
#[derive(Debug, Default)]
pub struct AccessLog {
    reads: Mutex<Vec<PathBuf>>,
}

impl AccessLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn read_to_string(&self, path: &Path) -> Result<String, PipelineError> {
        self.note(path);
        fs::read_to_string(path).map_err(|e| io_err(path, e))
    }

    /// Records a read performed by another API (e.g. checkpoint loading).
    pub fn note(&self, path: &Path) {
        self.reads.lock().unwrap_or_else(|e| e.into_inner()).push(path.to_path_buf());
    }

    /// Paths read so far, sorted.
    pub fn reads(&self) -> Vec<PathBuf> {
        let mut v = self.reads.lock().unwrap_or_else(|e| e.into_inner()).clone();
        v.sort();
        v
    }
}
