//! `attack`: predict, rectify and remove on every held-out instance, then
//! hand the results to the evaluator.
//!
//! The two halves are separate functions. [`attack_stage`] sees only the
//! locked netlists and the checkpoints; [`evaluate_stage`] reads the ground
//! truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gen::{Census, InstanceEntry, Secret};
use super::report::{summarize, DesignReport, InstanceResult, MetricsSummary, RectificationSummary};
use super::{read_json, write_file, write_json, AccessLog, AttackReport, ExperimentConfig, Layout, PipelineError};
use crate::gnn::{evaluate, load_checkpoint, Model};
use crate::graph::encode;
use crate::labels::{Labels, NodeClass, Scheme};
use crate::locking::LockMeta;
use crate::netlist::{parse_bench, write_bench, Netlist};
use crate::par;
use crate::postprocess::{log_csv, rectify};
use crate::redact::{check_equivalence_with, remove_protection, Budget, RedactError, EXHAUSTIVE_MAX_INPUTS};

/// What the attacker produced for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub design: String,
    pub val_design: String,
    pub instance: InstanceEntry,
    /// Gate names of the locked netlist, in gate order.
    pub gates: Vec<String>,
    pub predicted: Vec<NodeClass>,
    pub rectified: Vec<NodeClass>,
    /// `(rule, count)` for the gates rectification moved.
    pub rules_fired: BTreeMap<String, usize>,
    pub rectification_error: Option<String>,
    pub integration_gates: usize,
    pub removed_gates: usize,
    pub removal_error: Option<String>,
    pub recovered: Option<PathBuf>,
}

fn attack_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Attack(e.to_string())
}

fn load_model(layout: &Layout, test: &str, scheme: Scheme, log: &AccessLog) -> Result<Model, PipelineError> {
    let path = layout.checkpoint(test);
    log.note(&path);
    let ck = load_checkpoint(&path).map_err(attack_err)?;
    if ck.model.classes != scheme.classes() {
        return Err(PipelineError::Attack(format!(
            "{}: checkpoint classes {:?} do not match scheme {scheme}",
            path.display(),
            ck.model.classes
        )));
    }
    Ok(ck.model)
}

/// Runs the attacker on every TEST instance of every fold. Reads go through
/// `log`; nothing but `locked.bench` files and checkpoints is opened.
pub fn attack_stage(
    cfg: &ExperimentConfig,
    census: &Census,
    log: &AccessLog,
) -> Result<Vec<AttackOutcome>, PipelineError> {
    let layout = Layout::of(cfg);
    let mut out = Vec::new();
    for (test, val) in cfg.folds() {
        let entries: Vec<&InstanceEntry> = census.of_design(&test).collect();
        if entries.is_empty() {
            continue;
        }
        let model = load_model(&layout, &test, cfg.scheme, log)?;
        let results = par::map(&entries, |e| attack_one(&layout, cfg.scheme, &model, &test, &val, e, log));
        for r in results {
            out.push(r?);
        }
    }
    Ok(out)
}

fn attack_one(
    layout: &Layout,
    scheme: Scheme,
    model: &Model,
    design: &str,
    val: &str,
    entry: &InstanceEntry,
    log: &AccessLog,
) -> Result<AttackOutcome, PipelineError> {
    let text = log.read_to_string(&layout.instance(design, &entry.id).join("locked.bench"))?;
    let n = parse_bench(&text).map_err(attack_err)?;
    let g = encode(&n, None).map_err(attack_err)?;
    let preds = model.predict_graph(&g).map_err(attack_err)?;
    let predicted: Vec<NodeClass> = preds.iter().map(|p| p.class).collect();
    let pred_labels = Labels::from_classes(&n, &predicted);

    let (labels, rules_fired, rectification_error, rect_log) = match rectify(&n, scheme, &pred_labels) {
        Ok(r) => {
            let mut fired = BTreeMap::new();
            for e in &r.log {
                *fired.entry(e.rule.to_string()).or_insert(0) += 1;
            }
            let csv = log_csv(&r.log);
            (r.labels, fired, None, csv)
        }
        Err(e) => (pred_labels.clone(), BTreeMap::new(), Some(e.to_string()), log_csv(&[])),
    };
    let rectified = labels.for_netlist(&n).map_err(attack_err)?;

    let dir = layout.attack(design, &entry.id);
    let mut pcsv = String::from("gate_name,class,confidence\n");
    for (gate, p) in n.gates().iter().zip(&preds) {
        let _ = writeln!(pcsv, "{},{},{}", gate.name, p.class.name(), p.confidence);
    }
    write_file(&dir.join("predictions.csv"), pcsv)?;
    write_file(&dir.join("rectified.csv"), labels.to_csv(&n).map_err(attack_err)?)?;
    write_file(&dir.join("rectification_log.csv"), rect_log)?;

    let (mut integration_gates, mut removed_gates, mut removal_error, mut recovered) = (0, 0, None, None);
    match remove_protection(&n, &labels) {
        Ok(r) if r.integration_gates.is_empty() => removal_error = Some(RedactError::NoIntegrationGates.to_string()),
        Ok(r) => {
            integration_gates = r.integration_gates.len();
            removed_gates = r.removed_gates;
            match write_bench(&r.netlist.with_name(design)) {
                Ok(text) => {
                    let path = dir.join("recovered.bench");
                    write_file(&path, text)?;
                    recovered = Some(path);
                }
                Err(e) => removal_error = Some(e.to_string()),
            }
        }
        Err(e) => removal_error = Some(e.to_string()),
    }
    Ok(AttackOutcome {
        design: design.to_string(),
        val_design: val.to_string(),
        instance: entry.clone(),
        gates: n.gates().iter().map(|g| g.name.clone()).collect(),
        predicted,
        rectified,
        rules_fired,
        rectification_error,
        integration_gates,
        removed_gates,
        removal_error,
        recovered,
    })
}

/// Vectors at distance `h` from the key on the protected inputs, random
/// elsewhere.
fn directed_vectors(
    inputs: &[String],
    meta: &LockMeta,
    secret: &Secret,
    count: usize,
    seed: u64,
) -> Vec<BTreeMap<String, bool>> {
    let key: Vec<bool> = secret.key.chars().map(|c| c == '1').collect();
    if key.len() != meta.protected_inputs.len() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v: BTreeMap<String, bool> = inputs.iter().map(|i| (i.clone(), rng.gen())).collect();
            let mut bits = key.clone();
            if meta.h > 0 {
                for i in sample(&mut rng, bits.len(), meta.h) {
                    bits[i] = !bits[i];
                }
            }
            for (x, b) in meta.protected_inputs.iter().zip(bits) {
                v.insert(x.clone(), b);
            }
            v
        })
        .collect()
}

fn read_bench(path: &Path) -> Result<Netlist, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| super::io_err(path, e))?;
    parse_bench(&text).map_err(|e| super::io_err(path, e))
}

fn class_indices(scheme: Scheme, cs: &[NodeClass]) -> Result<Vec<usize>, PipelineError> {
    cs.iter()
        .map(|&c| {
            scheme.class_index(c).ok_or_else(|| PipelineError::Verification(format!("class {c} not used by {scheme}")))
        })
        .collect()
}

struct Scored {
    result: InstanceResult,
    truth: Vec<usize>,
    pre: Vec<usize>,
    post: Vec<usize>,
}

fn score_one(cfg: &ExperimentConfig, layout: &Layout, o: &AttackOutcome) -> Result<Scored, PipelineError> {
    let e = &o.instance;
    let dir = layout.instance(&o.design, &e.id);
    let labels = Labels::from_csv(
        &std::fs::read_to_string(dir.join("labels.csv")).map_err(|err| super::io_err(&dir.join("labels.csv"), err))?,
    )
    .map_err(|err| PipelineError::Verification(err.to_string()))?;
    let truth: Vec<NodeClass> = o
        .gates
        .iter()
        .map(|g| labels.get(g).ok_or_else(|| PipelineError::Verification(format!("{}: no label for `{g}`", e.id))))
        .collect::<Result<_, _>>()?;
    let truth = class_indices(cfg.scheme, &truth)?;
    let pre = class_indices(cfg.scheme, &o.predicted)?;
    let post = class_indices(cfg.scheme, &o.rectified)?;
    let acc = |p: &[usize]| p.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / truth.len().max(1) as f64;

    let (mut verdict, mut verification_error) = (None, None);
    if let Some(path) = &o.recovered {
        let original = read_bench(&layout.original(&o.design))?;
        let recovered = read_bench(path)?;
        let ni = original.primary_inputs().len();
        let budget = if ni <= EXHAUSTIVE_MAX_INPUTS {
            Budget::Exhaustive
        } else {
            Budget::Random { vectors: cfg.verify.random_vectors, seed: e.seed }
        };
        let directed = if cfg.scheme.is_sfll_family() && ni > EXHAUSTIVE_MAX_INPUTS {
            let meta: LockMeta = read_json(&dir.join("meta.json"))?;
            let secret: Secret = read_json(&dir.join("secret.json"))?;
            directed_vectors(original.primary_inputs(), &meta, &secret, cfg.verify.directed_vectors, e.seed ^ 0xd1)
        } else {
            Vec::new()
        };
        match check_equivalence_with(&original, &recovered, budget, &directed) {
            Ok(v) => verdict = Some(v),
            Err(err) => verification_error = Some(err.to_string()),
        }
    }
    let success = o.removal_error.is_none() && verdict.as_ref().is_some_and(|v| v.is_equivalent());
    let result = InstanceResult {
        id: e.id.clone(),
        key_size: e.key_size,
        h: e.h,
        seed: e.seed,
        gates: o.gates.len(),
        accuracy_pre: acc(&pre),
        accuracy_post: acc(&post),
        rectified_gates: o.rules_fired.values().sum(),
        rectification_error: o.rectification_error.clone(),
        integration_gates: o.integration_gates,
        removed_gates: o.removed_gates,
        removal_error: o.removal_error.clone(),
        verdict,
        verification_error,
        success,
    };
    Ok(Scored { result, truth, pre, post })
}

/// Scores attack outcomes against the ground truth and checks every
/// recovered circuit against its original.
pub fn evaluate_stage(
    cfg: &ExperimentConfig,
    outcomes: &[AttackOutcome],
) -> Result<AttackReport, PipelineError> {
    let layout = Layout::of(cfg);
    let classes = cfg.scheme.classes();
    let scored: Vec<Scored> =
        par::map(outcomes, |o| score_one(cfg, &layout, o)).into_iter().collect::<Result<_, _>>()?;
    let mut designs: Vec<DesignReport> = Vec::new();
    let mut i = 0;
    while i < outcomes.len() {
        let design = &outcomes[i].design;
        let j = i + outcomes[i..].iter().take_while(|o| &o.design == design).count();
        let cat = |f: fn(&Scored) -> &Vec<usize>| scored[i..j].iter().flat_map(|s| f(s).iter().copied()).collect();
        let (truth, pre, post): (Vec<usize>, Vec<usize>, Vec<usize>) =
            (cat(|s| &s.truth), cat(|s| &s.pre), cat(|s| &s.post));
        let m_pre = evaluate(&pre, &truth, classes).map_err(|e| PipelineError::Verification(e.to_string()))?;
        let m_post = evaluate(&post, &truth, classes).map_err(|e| PipelineError::Verification(e.to_string()))?;
        let mut rect = RectificationSummary::default();
        for o in &outcomes[i..j] {
            for (rule, n) in &o.rules_fired {
                *rect.by_rule.entry(rule.clone()).or_insert(0) += n;
                rect.rectified_gates += n;
            }
            rect.errors += o.rectification_error.is_some() as usize;
        }
        let instances: Vec<InstanceResult> = scored[i..j].iter().map(|s| s.result.clone()).collect();
        let equivalent = instances.iter().filter(|r| r.success).count();
        designs.push(DesignReport {
            design: design.clone(),
            val_design: outcomes[i].val_design.clone(),
            pre: MetricsSummary::from(&m_pre),
            post: MetricsSummary::from(&m_post),
            rectification: rect,
            equivalent,
            removal_success: equivalent as f64 / instances.len() as f64,
            instances,
        });
        i = j;
    }
    Ok(AttackReport {
        schema_version: super::REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scheme: cfg.scheme,
        config: cfg.clone(),
        summary: summarize(cfg.scheme, &designs),
        designs,
    })
}

/// Attack, evaluate, and write report.json and report.csv.
pub fn cmd_attack(cfg: &ExperimentConfig) -> Result<AttackReport, PipelineError> {
    let layout = Layout::of(cfg);
    let census: Census = read_json(&layout.census())?;
    if census.scheme != cfg.scheme {
        return Err(PipelineError::Attack(format!("dataset is {} but the config says {}", census.scheme, cfg.scheme)));
    }
    let start = Instant::now();
    let log = AccessLog::new();
    let outcomes = attack_stage(cfg, &census, &log)?;
    if outcomes.is_empty() {
        return Err(PipelineError::Attack("no TEST instances to attack".into()));
    }
    let attack_s = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let report = evaluate_stage(cfg, &outcomes)?;
    write_json(&layout.report_json(), &report)?;
    write_file(&layout.report_csv(), super::report_csv(&report))?;
    let mut reads = String::new();
    for p in log.reads() {
        let _ = writeln!(reads, "{}", p.strip_prefix(&layout.root).unwrap_or(&p).display());
    }
    write_file(&layout.root.join("attack").join("reads.txt"), reads)?;
    layout.record_timing(&[("attack".into(), attack_s), ("evaluate".into(), start.elapsed().as_secs_f64())])?;
    Ok(report)
}
