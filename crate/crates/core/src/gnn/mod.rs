//! Node classifier: a two-layer GraphSAGE with mean aggregation and
//! self/neighbour concatenation, trained on random-walk subgraphs.

mod adam;
mod checkpoint;
mod matrix;
mod metrics;
mod model;
mod sampler;
mod train;

use thiserror::Error;

use crate::graph::{CircuitGraph, Csr, GraphError, Scaler, Split};
use crate::labels::NodeClass;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, SCHEMA_VERSION};
pub use matrix::{matmul, Matrix, View};
pub use metrics::{evaluate, Metrics};
pub use model::{forward, init_params, loss_and_grads, predict, Dims, Dropout, ModelParams, BLOCK_NAMES};
pub use sampler::{sample_subgraph, SampledSubgraph};
pub use train::{history_csv, train, EpochRecord, Selection, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("loss mask selects no nodes")]
    EmptyMask,
    #[error("{predicted} predictions for {labeled} labels")]
    NodeSetMismatch { predicted: usize, labeled: usize },
    #[error("no {0:?} nodes")]
    EmptySplit(Split),
    #[error("node {0} has no label")]
    Unlabeled(usize),
    #[error("class {0} is not one of the model's classes")]
    ClassNotModeled(NodeClass),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Trained parameters with everything needed to classify a new graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: ModelParams,
    pub classes: Vec<NodeClass>,
    pub scaler: Scaler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class: NodeClass,
    pub confidence: f64,
}

impl Model {
    pub fn predict_graph(&self, g: &CircuitGraph) -> Result<Vec<Prediction>, GnnError> {
        if g.feature_dim != self.params.dims().input {
            return Err(GraphError::SchemaMismatch { expected: self.params.dims().input, got: g.feature_dim }.into());
        }
        let mut x = Matrix::from_vec(g.num_nodes(), g.feature_dim, g.features.clone());
        self.scaler.apply(&mut x.data, g.feature_dim);
        let adj = Csr::from_lists(&g.neighbors());
        Ok(predict(&self.params, &adj, &x)?
            .into_iter()
            .map(|(c, confidence)| Prediction { class: self.classes[c], confidence })
            .collect())
    }
}
