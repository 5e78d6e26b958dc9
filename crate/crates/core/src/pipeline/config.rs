//! Experiment configuration: JSON, strict fields, positioned errors.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::benchmarks;
use crate::gnn::TrainConfig;
use crate::labels::Scheme;
use crate::netlist::{parse_bench, Netlist};

/// Prefix selecting a circuit shipped in [`crate::benchmarks`].
pub const VENDORED_PREFIX: &str = "vendored:";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub message: String,
    /// 1-based position in the config text, when one can be attributed.
    pub line: Option<usize>,
    pub column: Option<usize>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "config line {l}, column {c}: {}", self.message),
            (Some(l), None) => write!(f, "config line {l}: {}", self.message),
            _ => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Random vectors when the circuit has too many inputs for exhaustion.
    pub random_vectors: u64,
    /// Extra vectors aimed at protected patterns (SFLL family).
    pub directed_vectors: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { random_vectors: crate::redact::DEFAULT_RANDOM_VECTORS, directed_vectors: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Bench paths relative to the config file, or `vendored:<name>`.
    pub benchmarks: Vec<String>,
    pub scheme: Scheme,
    pub key_sizes: Vec<usize>,
    #[serde(default = "default_h")]
    pub h_values: Vec<usize>,
    #[serde(default = "default_locks")]
    pub locks_per_setting: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_augment")]
    pub augmentation_passes: usize,
    #[serde(default)]
    pub perturb_rewrite_passes: usize,
    #[serde(default)]
    pub train: TrainConfig,
    /// Held-out design; all designs in turn when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_design: Option<String>,
    /// Validation design for `test_design`; defaults to the next design.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_design: Option<String>,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default = "default_out", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_h() -> Vec<usize> {
    vec![0]
}

fn default_locks() -> usize {
    2
}

fn default_augment() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// A benchmark entry resolved to a design name and its source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkRef {
    pub design: String,
    pub source: BenchmarkSource,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BenchmarkSource {
    Vendored(&'static str),
    File(PathBuf),
}

impl BenchmarkRef {
    pub fn load(&self) -> Result<Netlist, String> {
        let n = match &self.source {
            BenchmarkSource::Vendored(text) => parse_bench(text).map_err(|e| e.to_string())?,
            BenchmarkSource::File(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                parse_bench(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
        };
        Ok(n.with_name(self.design.clone()))
    }
}

impl ExperimentConfig {
    /// Minimal config over the given benchmarks with every other field at
    /// its default.
    pub fn new(benchmarks: Vec<String>, scheme: Scheme, key_sizes: Vec<usize>) -> Self {
        ExperimentConfig {
            benchmarks,
            scheme,
            key_sizes,
            h_values: default_h(),
            locks_per_setting: default_locks(),
            seed: 0,
            augmentation_passes: default_augment(),
            perturb_rewrite_passes: 0,
            train: TrainConfig::default(),
            test_design: None,
            val_design: None,
            verify: VerifyConfig::default(),
            output_dir: default_out(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            message: format!("{}: {e}", path.display()),
            line: None,
            column: None,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    /// Parses and validates. Relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            message: e.to_string().split(" at line ").next().unwrap_or_default().to_string(),
            line: Some(e.line()),
            column: Some(e.column()),
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base_dir.join(&cfg.output_dir);
        }
        cfg.validate().map_err(|(field, message)| {
            let (line, column) = locate(text, field).map_or((None, None), |(l, c)| (Some(l), Some(c)));
            ConfigError { message, line, column }
        })?;
        Ok(cfg)
    }

    /// Checks every invariant; the error names the offending field.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let refs = self.resolve_benchmarks().map_err(|m| ("benchmarks", m))?;
        for r in &refs {
            if let BenchmarkSource::File(p) = &r.source {
                if !p.is_file() {
                    return Err(("benchmarks", format!("benchmark file {} does not exist", p.display())));
                }
            }
        }
        if refs.len() < 3 {
            return Err(("benchmarks", format!("need at least 3 designs (train/val/test), got {}", refs.len())));
        }
        if self.key_sizes.is_empty() {
            return Err(("key_sizes", "no key sizes".into()));
        }
        if self.h_values.is_empty() {
            return Err(("h_values", "no Hamming distances".into()));
        }
        for &k in &self.key_sizes {
            if k == 0 {
                return Err(("key_sizes", "key size 0".into()));
            }
            if self.scheme == Scheme::AntiSat && k % 2 == 1 {
                return Err(("key_sizes", format!("Anti-SAT needs even key sizes, got {k}")));
            }
            for &h in &self.h_values {
                match self.scheme {
                    Scheme::AntiSat | Scheme::TtLock if h != 0 => {
                        return Err(("h_values", format!("{} takes h = 0 only, got {h}", self.scheme)));
                    }
                    Scheme::SfllHd if h > k => {
                        return Err(("h_values", format!("h = {h} exceeds key size {k}")));
                    }
                    _ => {}
                }
            }
        }
        let names: Vec<&str> = refs.iter().map(|r| r.design.as_str()).collect();
        for (field, d) in [("test_design", &self.test_design), ("val_design", &self.val_design)] {
            if let Some(d) = d {
                if !names.contains(&d.as_str()) {
                    return Err((field, format!("unknown design `{d}`")));
                }
            }
        }
        if self.val_design.is_some() && self.test_design.is_none() {
            return Err(("val_design", "val_design requires test_design".into()));
        }
        if self.test_design.is_some() && self.test_design == self.val_design {
            return Err(("val_design", "test and validation design coincide".into()));
        }
        self.train.validate().map_err(|e| ("train", e.to_string()))
    }

    pub fn resolve_benchmarks(&self) -> Result<Vec<BenchmarkRef>, String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(self.benchmarks.len());
        for b in &self.benchmarks {
            let r = if let Some(name) = b.strip_prefix(VENDORED_PREFIX) {
                let v = benchmarks::find(name).ok_or_else(|| format!("no vendored benchmark `{name}`"))?;
                BenchmarkRef { design: v.name.to_string(), source: BenchmarkSource::Vendored(v.text) }
            } else {
                let p = self.base_dir.join(b);
                let design = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| format!("cannot name a design after `{b}`"))?
                    .to_string();
                BenchmarkRef { design, source: BenchmarkSource::File(p) }
            };
            if !seen.insert(r.design.clone()) {
                return Err(format!("design `{}` listed twice", r.design));
            }
            out.push(r);
        }
        Ok(out)
    }

    pub fn scheme_dir(&self) -> PathBuf {
        self.output_dir.join(self.scheme.name())
    }

    /// `(test, val)` pairs to train and attack.
    pub fn folds(&self) -> Vec<(String, String)> {
        let names: Vec<String> =
            self.resolve_benchmarks().unwrap_or_default().into_iter().map(|r| r.design).collect();
        let next = |i: usize| names[(i + 1) % names.len()].clone();
        match &self.test_design {
            Some(t) => {
                let i = names.iter().position(|n| n == t).unwrap_or(0);
                vec![(t.clone(), self.val_design.clone().unwrap_or_else(|| next(i)))]
            }
            None => names.iter().enumerate().map(|(i, n)| (n.clone(), next(i))).collect(),
        }
    }
}

/// Position of the first `"field"` key in `text`.
fn locate(text: &str, field: &str) -> Option<(usize, usize)> {
    let needle = format!("\"{field}\"");
    text.lines().enumerate().find_map(|(i, l)| l.find(&needle).map(|c| (i + 1, c + 1)))
}
