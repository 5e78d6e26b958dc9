//! Minibatch training loop with validation-based model selection.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::matrix::Matrix;
use super::metrics::evaluate;
use super::model::{init_params, loss_and_grads, predict, Dims, Dropout, ModelParams};
use super::sampler::sample_subgraph;
use super::{GnnError, Model};
use crate::graph::{Csr, Dataset, Scaler, Split};
use crate::labels::NodeClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    ValAccuracy,
    ValMacroF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub walk_length: usize,
    pub num_roots: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub hidden: usize,
    /// Inverse-frequency class weights on the cross-entropy.
    pub class_weights: bool,
    pub selection: Selection,
    /// Validate every this many epochs (and always on the first).
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            dropout: 0.1,
            max_epochs: 2000,
            walk_length: 2,
            num_roots: 3000,
            patience: 200,
            hidden: Dims::DEFAULT_HIDDEN,
            class_weights: false,
            selection: Selection::ValAccuracy,
            eval_every: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        let bad = |m: &str| Err(GnnError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if self.num_roots == 0 {
            return bad("num_roots must be at least 1");
        }
        if self.max_epochs == 0 || self.hidden == 0 || self.eval_every == 0 {
            return bad("max_epochs, hidden and eval_every must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` on epochs that skipped validation.
    pub val_accuracy: Option<f64>,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_accuracy\n");
    for r in history {
        let acc = r.val_accuracy.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", r.epoch, r.train_loss, acc);
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_score: f64,
}

/// Node features of `nodes`, scaled, as a matrix.
pub(crate) fn gather(features: &[f64], dim: usize, nodes: &[u32]) -> Matrix {
    let mut data = Vec::with_capacity(nodes.len() * dim);
    for &n in nodes {
        data.extend_from_slice(&features[n as usize * dim..(n as usize + 1) * dim]);
    }
    Matrix::from_vec(nodes.len(), dim, data)
}

fn labels_of(ds: &Dataset, nodes: &[u32], classes: &[NodeClass]) -> Result<Vec<usize>, GnnError> {
    nodes
        .iter()
        .map(|&n| {
            let c = ds.label(n as usize).ok_or(GnnError::Unlabeled(n as usize))?;
            classes.iter().position(|&k| k == c).ok_or(GnnError::ClassNotModeled(c))
        })
        .collect()
}

fn inverse_frequency(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    counts.iter().map(|&c| if c == 0 { 0.0 } else { n / (classes as f64 * c as f64) }).collect()
}

struct ValView {
    adjacency: Csr,
    x: Matrix,
    truth: Vec<usize>,
}

impl ValView {
    fn score(&self, p: &ModelParams, classes: &[NodeClass], sel: Selection) -> Result<(f64, f64), GnnError> {
        let preds: Vec<usize> = predict(p, &self.adjacency, &self.x)?.into_iter().map(|(c, _)| c).collect();
        let m = evaluate(&preds, &self.truth, classes)?;
        let score = match sel {
            Selection::ValAccuracy => m.accuracy,
            Selection::ValMacroF1 => m.f1.iter().sum::<f64>() / m.f1.len() as f64,
        };
        Ok((m.accuracy, score))
    }
}

/// Trains on TRAIN graphs and keeps the parameters that score best on VAL
/// (earliest epoch on ties). TEST labels are never read.
pub fn train(ds: &Dataset, classes: &[NodeClass], cfg: &TrainConfig) -> Result<TrainOutcome, GnnError> {
    cfg.validate()?;
    if classes.len() < 2 {
        return Err(GnnError::InvalidConfig("at least two classes are needed".into()));
    }
    let train_nodes = ds.nodes_in(Split::Train);
    let val_nodes = ds.nodes_in(Split::Val);
    if train_nodes.is_empty() {
        return Err(GnnError::EmptySplit(Split::Train));
    }
    if val_nodes.is_empty() {
        return Err(GnnError::EmptySplit(Split::Val));
    }
    let dim = ds.feature_dim();
    let scaler = Scaler::fit(ds);
    let mut features = ds.features().to_vec();
    scaler.apply(&mut features, dim);

    let mut train_label = vec![usize::MAX; ds.num_nodes()];
    let train_truth = labels_of(ds, &train_nodes, classes)?;
    for (&n, &c) in train_nodes.iter().zip(&train_truth) {
        train_label[n as usize] = c;
    }
    let weights = cfg.class_weights.then(|| inverse_frequency(&train_truth, classes.len()));
    let val = ValView {
        adjacency: ds.adjacency().induced(&val_nodes),
        x: gather(&features, dim, &val_nodes),
        truth: labels_of(ds, &val_nodes, classes)?,
    };

    let dims = Dims { input: dim, hidden: cfg.hidden, classes: classes.len() };
    let mut params = init_params(dims, cfg.seed)?;
    let mut opt = Adam::new(&params, cfg.learning_rate);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5a3c_91e7_0b4d_2f68);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1f2e_3d4c_5b6a_7988);

    let mut best = (params.clone(), 0usize, f64::NEG_INFINITY);
    let mut history = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        let sub = sample_subgraph(ds.adjacency(), &train_nodes, cfg.num_roots, cfg.walk_length, &mut sample_rng);
        let x = gather(&features, dim, &sub.nodes);
        let targets: Vec<(u32, usize)> = sub
            .nodes
            .iter()
            .enumerate()
            .filter(|&(_, &g)| train_label[g as usize] != usize::MAX)
            .map(|(i, &g)| (i as u32, train_label[g as usize]))
            .collect();
        let dropout = (cfg.dropout > 0.0).then_some(Dropout { rate: cfg.dropout, rng: &mut drop_rng });
        let (loss, grads) = loss_and_grads(&params, &sub.adjacency, &x, &targets, weights.as_deref(), dropout)?;
        opt.step(&mut params, &grads);

        let mut val_accuracy = None;
        if epoch == 1 || epoch % cfg.eval_every == 0 {
            let (acc, score) = val.score(&params, classes, cfg.selection)?;
            val_accuracy = Some(acc);
            if score > best.2 {
                best = (params.clone(), epoch, score);
            }
        }
        history.push(EpochRecord { epoch, train_loss: loss, val_accuracy });
        if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    let (params, best_epoch, best_score) = best;
    Ok(TrainOutcome {
        model: Model { params, classes: classes.to_vec(), scaler },
        history,
        best_epoch,
        best_score,
    })
}
