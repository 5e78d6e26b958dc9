//! Attack reports and their aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, PipelineError};
use crate::gnn::Metrics;
use crate::labels::{NodeClass, Scheme};
use crate::redact::Verdict;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: NodeClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub nodes: u64,
    pub accuracy: f64,
    /// `confusion[true][predicted]`, classes in scheme order.
    pub confusion: Vec<Vec<u64>>,
    pub scores: Vec<ClassScores>,
    /// Off-diagonal cells as `"2 DN as PN"`.
    pub misclassified: Vec<String>,
}

impl From<&Metrics> for MetricsSummary {
    fn from(m: &Metrics) -> Self {
        MetricsSummary {
            nodes: m.total(),
            accuracy: m.accuracy,
            confusion: m.confusion.clone(),
            scores: m
                .classes
                .iter()
                .enumerate()
                .map(|(i, &class)| ClassScores { class, precision: m.precision[i], recall: m.recall[i], f1: m.f1[i] })
                .collect(),
            misclassified: m.misclassification_summary(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub id: String,
    pub key_size: usize,
    pub h: usize,
    pub seed: u64,
    pub gates: usize,
    pub accuracy_pre: f64,
    pub accuracy_post: f64,
    pub rectified_gates: usize,
    pub rectification_error: Option<String>,
    pub integration_gates: usize,
    pub removed_gates: usize,
    pub removal_error: Option<String>,
    pub verdict: Option<Verdict>,
    pub verification_error: Option<String>,
    /// Removal succeeded and the recovered circuit was judged equivalent.
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RectificationSummary {
    pub rectified_gates: usize,
    /// How often each rule was the last to move a gate.
    pub by_rule: BTreeMap<String, usize>,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub design: String,
    pub val_design: String,
    pub pre: MetricsSummary,
    pub post: MetricsSummary,
    pub rectification: RectificationSummary,
    pub equivalent: usize,
    pub removal_success: f64,
    pub instances: Vec<InstanceResult>,
}

/// Dataset-level averages: accuracies and scores are means over designs,
/// removal success pools all instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub designs: usize,
    pub instances: usize,
    pub equivalent: usize,
    pub removal_success: f64,
    pub accuracy_pre: f64,
    pub accuracy_post: f64,
    pub scores_pre: Vec<ClassScores>,
    pub scores_post: Vec<ClassScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub scheme: Scheme,
    pub config: ExperimentConfig,
    pub designs: Vec<DesignReport>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub scheme: Scheme,
    pub reports: Vec<String>,
    pub summary: Summary,
    /// Sum of the per-fold training times found next to the reports.
    pub train_seconds: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn mean_scores(classes: &[NodeClass], per_design: &[&[ClassScores]]) -> Vec<ClassScores> {
    classes
        .iter()
        .enumerate()
        .map(|(i, &class)| ClassScores {
            class,
            precision: mean(per_design.iter().map(|s| s[i].precision)),
            recall: mean(per_design.iter().map(|s| s[i].recall)),
            f1: mean(per_design.iter().map(|s| s[i].f1)),
        })
        .collect()
}

pub fn summarize(scheme: Scheme, designs: &[DesignReport]) -> Summary {
    let instances: usize = designs.iter().map(|d| d.instances.len()).sum();
    let equivalent: usize = designs.iter().map(|d| d.equivalent).sum();
    let pre: Vec<&[ClassScores]> = designs.iter().map(|d| d.pre.scores.as_slice()).collect();
    let post: Vec<&[ClassScores]> = designs.iter().map(|d| d.post.scores.as_slice()).collect();
    Summary {
        designs: designs.len(),
        instances,
        equivalent,
        removal_success: if instances == 0 { 0.0 } else { equivalent as f64 / instances as f64 },
        accuracy_pre: mean(designs.iter().map(|d| d.pre.accuracy)),
        accuracy_post: mean(designs.iter().map(|d| d.post.accuracy)),
        scores_pre: mean_scores(scheme.classes(), &pre),
        scores_post: mean_scores(scheme.classes(), &post),
    }
}

/// Pools the designs of several reports of one scheme.
pub fn aggregate(reports: &[(String, AttackReport)]) -> Result<AggregateReport, PipelineError> {
    let Some((_, first)) = reports.first() else {
        return Err(PipelineError::Report("no reports to aggregate".into()));
    };
    for (name, r) in reports {
        if r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(PipelineError::Report(format!(
                "{name}: schema version {} (expected {REPORT_SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        if r.scheme != first.scheme {
            return Err(PipelineError::Report(format!("{name}: scheme {} differs from {}", r.scheme, first.scheme)));
        }
    }
    let designs: Vec<DesignReport> = reports.iter().flat_map(|(_, r)| r.designs.iter().cloned()).collect();
    Ok(AggregateReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scheme: first.scheme,
        reports: reports.iter().map(|(n, _)| n.clone()).collect(),
        summary: summarize(first.scheme, &designs),
        train_seconds: None,
    })
}

/// Reads report.json files, checking the schema version before anything
/// else, and aggregates them.
pub fn cmd_report(paths: &[PathBuf]) -> Result<AggregateReport, PipelineError> {
    let mut reports = Vec::with_capacity(paths.len());
    let mut train_seconds: Option<f64> = None;
    for p in paths {
        let text = std::fs::read_to_string(p).map_err(|e| super::io_err(p, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| super::io_err(p, e))?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(REPORT_SCHEMA_VERSION as u64) {
            return Err(PipelineError::Report(format!(
                "{}: schema version {} (expected {REPORT_SCHEMA_VERSION})",
                p.display(),
                version.map_or("missing".to_string(), |v| v.to_string())
            )));
        }
        let r: AttackReport = serde_json::from_value(value).map_err(|e| super::io_err(p, e))?;
        if let Some(t) = read_train_seconds(p) {
            *train_seconds.get_or_insert(0.0) += t;
        }
        reports.push((p.display().to_string(), r));
    }
    let mut agg = aggregate(&reports)?;
    agg.train_seconds = train_seconds;
    Ok(agg)
}

fn read_train_seconds(report: &Path) -> Option<f64> {
    let timing = report.parent()?.join("timing.json");
    let t: BTreeMap<String, f64> = serde_json::from_str(&std::fs::read_to_string(timing).ok()?).ok()?;
    let train: Vec<f64> = t.iter().filter(|(k, _)| k.starts_with("train/")).map(|(_, &v)| v).collect();
    (!train.is_empty()).then(|| train.iter().sum())
}

/// One row per design plus an AVERAGE row, post-rectification scores.
pub fn report_csv(r: &AttackReport) -> String {
    let classes = r.scheme.classes();
    let mut s = String::from("design,instances,nodes,accuracy_pre,accuracy_post");
    for c in classes {
        let _ = write!(s, ",precision_{0},recall_{0},f1_{0}", c.code());
    }
    s.push_str(",misclassified_pre,misclassified_post,rectified_gates,removal_success\n");
    let scores = |s: &mut String, sc: &[ClassScores]| {
        for c in sc {
            let _ = write!(s, ",{:.6},{:.6},{:.6}", c.precision, c.recall, c.f1);
        }
    };
    for d in &r.designs {
        let _ = write!(s, "{},{},{},{:.6},{:.6}", d.design, d.instances.len(), d.post.nodes, d.pre.accuracy, d.post.accuracy);
        scores(&mut s, &d.post.scores);
        let _ = writeln!(
            s,
            ",{},{},{},{:.6}",
            d.pre.misclassified.join("; "),
            d.post.misclassified.join("; "),
            d.rectification.rectified_gates,
            d.removal_success
        );
    }
    let m = &r.summary;
    let nodes: u64 = r.designs.iter().map(|d| d.post.nodes).sum();
    let rect: usize = r.designs.iter().map(|d| d.rectification.rectified_gates).sum();
    let _ = write!(s, "AVERAGE,{},{nodes},{:.6},{:.6}", m.instances, m.accuracy_pre, m.accuracy_post);
    scores(&mut s, &m.scores_post);
    let _ = writeln!(s, ",,,{rect},{:.6}", m.removal_success);
    s
}
