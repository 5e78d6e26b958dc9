//! `gen-dataset`: lock every design several times and encode the results.

use std::collections::BTreeSet;
use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{io_err, write_file, write_json, ExperimentConfig, Layout, PipelineError};
use crate::graph::{batch, encode, write_dataset, CircuitGraph};
use crate::labels::Scheme;
use crate::locking::{lock, LockConfig};
use crate::netlist::{rewrite_augment, write_bench, Netlist, RuleSet};
use crate::par;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceEntry {
    /// Directory name, `<K>_<h>_<seed>`.
    pub id: String,
    pub design: String,
    pub key_size: usize,
    pub h: usize,
    pub seed: u64,
    pub gates: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub design: String,
    pub key_size: usize,
    pub h: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub scheme: Scheme,
    pub designs: Vec<String>,
    pub instances: Vec<InstanceEntry>,
    pub skipped: Vec<Skipped>,
}

impl Census {
    pub fn of_design<'a>(&'a self, design: &'a str) -> impl Iterator<Item = &'a InstanceEntry> + 'a {
        self.instances.iter().filter(move |i| i.design == design)
    }
}

/// Contents of secret.json.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Secret {
    pub key_inputs: Vec<String>,
    /// Bit `i` drives `key_inputs[i]`.
    pub key: String,
}

#[derive(Debug, Clone)]
pub struct GenOutcome {
    pub census: Census,
    pub warnings: Vec<String>,
}

struct Job {
    design: usize,
    key_size: usize,
    h: usize,
    seed: u64,
}

fn inputs_needed(scheme: Scheme, k: usize) -> usize {
    match scheme {
        Scheme::AntiSat => k / 2,
        Scheme::TtLock | Scheme::SfllHd => k,
    }
}

/// Seed of augmentation pass `pass` for an instance.
fn augment_seed(seed: u64, pass: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(pass as u64 + 1)
}

pub fn cmd_gen_dataset(cfg: &ExperimentConfig) -> Result<GenOutcome, PipelineError> {
    let refs = cfg.resolve_benchmarks().map_err(PipelineError::Dataset)?;
    let designs: Vec<Netlist> =
        refs.iter().map(|r| r.load().map_err(PipelineError::Dataset)).collect::<Result<_, _>>()?;
    let layout = Layout::of(cfg);
    prepare_root(&layout)?;

    let mut warnings = Vec::new();
    if cfg.locks_per_setting == 0 {
        warnings.push("locks_per_setting is 0: the dataset is empty".to_string());
    }
    // Seeds are drawn for every slot, feasible or not, so that dropping a
    // design does not reshuffle the others.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for (di, n) in designs.iter().enumerate() {
        write_file(&layout.original(n.name()), write_bench(n).map_err(|e| PipelineError::Dataset(e.to_string()))?)?;
        for &k in &cfg.key_sizes {
            for &h in &cfg.h_values {
                let seeds: Vec<u64> = (0..cfg.locks_per_setting).map(|_| rng.gen::<u32>() as u64).collect();
                let need = inputs_needed(cfg.scheme, k);
                let have = n.primary_inputs().len();
                if have < need {
                    let reason = format!("needs {need} primary inputs, has {have}");
                    warnings.push(format!("skipping {} K={k} h={h}: {reason}", n.name()));
                    skipped.push(Skipped { design: n.name().to_string(), key_size: k, h, reason });
                    continue;
                }
                let distinct: BTreeSet<u64> = seeds.iter().copied().collect();
                if distinct.len() != seeds.len() {
                    return Err(PipelineError::Dataset(format!("seed collision for {} K={k} h={h}", n.name())));
                }
                jobs.extend(seeds.into_iter().map(|seed| Job { design: di, key_size: k, h, seed }));
            }
        }
    }

    let built: Vec<Result<(InstanceEntry, CircuitGraph), PipelineError>> =
        par::map(&jobs, |job| build_instance(cfg, &layout, &designs[job.design], job));
    let mut instances = Vec::with_capacity(built.len());
    let mut graphs = Vec::with_capacity(built.len());
    for b in built {
        let (e, g) = b?;
        instances.push(e);
        graphs.push(g);
    }
    let ds = batch(graphs).map_err(|e| PipelineError::Dataset(e.to_string()))?;
    write_dataset(&ds, &layout.dataset()).map_err(|e| PipelineError::Dataset(e.to_string()))?;
    let census = Census {
        scheme: cfg.scheme,
        designs: designs.iter().map(|n| n.name().to_string()).collect(),
        instances,
        skipped,
    };
    write_json(&layout.census(), &census)?;
    Ok(GenOutcome { census, warnings })
}

/// Clears a previous run. Refuses to touch a non-empty directory that does
/// not look like one of ours.
fn prepare_root(layout: &Layout) -> Result<(), PipelineError> {
    let root = &layout.root;
    if root.exists() {
        let empty = fs::read_dir(root).map_err(|e| io_err(root, e))?.next().is_none();
        if !empty && !layout.census().is_file() {
            return Err(PipelineError::Dataset(format!(
                "{} exists and holds no census.json; refusing to overwrite it",
                root.display()
            )));
        }
        fs::remove_dir_all(root).map_err(|e| io_err(root, e))?;
    }
    fs::create_dir_all(root).map_err(|e| io_err(root, e))
}

fn build_instance(
    cfg: &ExperimentConfig,
    layout: &Layout,
    design: &Netlist,
    job: &Job,
) -> Result<(InstanceEntry, CircuitGraph), PipelineError> {
    let err = |e: &dyn std::fmt::Display| {
        PipelineError::Dataset(format!("{} K={} h={} seed={}: {e}", design.name(), job.key_size, job.h, job.seed))
    };
    let mut n = design.clone();
    for pass in 0..cfg.augmentation_passes {
        n = rewrite_augment(&n, &RuleSet::all(), augment_seed(job.seed, pass));
    }
    let lc = LockConfig {
        perturb_rewrite_passes: cfg.perturb_rewrite_passes,
        ..LockConfig::new(cfg.scheme, job.key_size, job.h, job.seed)
    };
    let inst = lock(&n, &lc).map_err(|e| err(&e))?;
    let id = format!("{}_{}_{}", job.key_size, job.h, job.seed);
    let dir = layout.instance(design.name(), &id);
    let locked = inst.netlist.with_name(design.name());
    write_file(&dir.join("locked.bench"), write_bench(&locked).map_err(|e| err(&e))?)?;
    write_file(&dir.join("labels.csv"), inst.labels.to_csv(&locked).map_err(|e| err(&e))?)?;
    write_json(&dir.join("meta.json"), &inst.meta)?;
    write_json(
        &dir.join("secret.json"),
        &Secret { key_inputs: locked.key_inputs().to_vec(), key: inst.key.to_bit_string() },
    )?;
    let mut g = encode(&locked, Some(&inst.labels)).map_err(|e| err(&e))?;
    g.instance = format!("{}/{id}", design.name());
    let entry = InstanceEntry {
        id,
        design: design.name().to_string(),
        key_size: job.key_size,
        h: job.h,
        seed: job.seed,
        gates: locked.num_gates(),
    };
    Ok((entry, g))
}
