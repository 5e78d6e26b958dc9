//! `train`: one model per held-out design.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{write_file, write_json, ExperimentConfig, Layout, PipelineError};
use crate::gnn::{history_csv, save_checkpoint, train, Checkpoint};
use crate::graph::{read_dataset, split_loo, Split};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub test_design: String,
    pub val_design: String,
    pub train_graphs: usize,
    pub val_graphs: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_score: f64,
    /// Label reads on TEST nodes during training; always 0.
    pub test_label_reads: u64,
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<FoldRecord>, PipelineError> {
    let layout = Layout::of(cfg);
    let ds = read_dataset(&layout.dataset()).map_err(|e| PipelineError::Train(e.to_string()))?;
    if ds.num_graphs() == 0 {
        return Err(PipelineError::Train("the dataset is empty".into()));
    }
    let classes = cfg.scheme.classes();
    let mut records = Vec::new();
    let mut timing = Vec::new();
    for (test, val) in cfg.folds() {
        let start = Instant::now();
        let fold = split_loo(&ds, &test, &val).map_err(|e| PipelineError::Train(format!("fold {test}: {e}")))?;
        let out = train(&fold, classes, &cfg.train).map_err(|e| PipelineError::Train(format!("fold {test}: {e}")))?;
        let dir = layout.model_dir(&test);
        let ck = Checkpoint { model: out.model, config: cfg.train.clone(), seed: cfg.train.seed };
        write_file(&dir.join("history.csv"), history_csv(&out.history))?;
        std::fs::create_dir_all(&dir).map_err(|e| super::io_err(&dir, e))?;
        save_checkpoint(&layout.checkpoint(&test), &ck).map_err(|e| PipelineError::Train(e.to_string()))?;
        let rec = FoldRecord {
            test_design: test.clone(),
            val_design: val,
            train_graphs: fold.graphs_in(Split::Train).len(),
            val_graphs: fold.graphs_in(Split::Val).len(),
            epochs_run: out.history.len(),
            best_epoch: out.best_epoch,
            best_val_score: out.best_score,
            test_label_reads: fold.label_reads(Split::Test),
        };
        write_json(&dir.join("fold.json"), &rec)?;
        records.push(rec);
        timing.push((format!("train/{test}"), start.elapsed().as_secs_f64()));
    }
    layout.record_timing(&timing)?;
    Ok(records)
}
