//! Netlist to undirected gate graph, with per-node structural features.

mod dataset;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{LabelError, Labels, NodeClass};
use crate::netlist::{GateId, GateType, Netlist, NetlistError, Signal};

pub use dataset::{batch, read_dataset, split_loo, write_dataset, Csr, Dataset, Scaler, Split};

/// Column names of the feature matrix.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "in_degree",
    "out_degree",
    "to_pi",
    "to_ki",
    "to_po",
    "n_and",
    "n_nand",
    "n_or",
    "n_nor",
    "n_xor",
    "n_xnor",
    "n_not",
    "n_buf",
];

pub const FEATURE_DIM: usize = 5 + GateType::BENCH.len();

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error("feature width {got} does not match {expected}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("unknown design `{0}`")]
    UnknownDesign(String),
    #[error("test and validation design are both `{0}`")]
    SameDesign(String),
    #[error("no training graphs remain after the split")]
    NoTrainingGraphs,
    #[error("dataset file {file}: {message}")]
    Io { file: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub in_degree: u32,
    pub out_degree: u32,
    pub to_pi: bool,
    pub to_ki: bool,
    pub to_po: bool,
    /// Gates of each bench type within two undirected hops, self excluded.
    pub neigh_counts: [u32; 8],
}

impl FeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_DIM);
        v.push(self.in_degree as f64);
        v.push(self.out_degree as f64);
        v.push(self.to_pi as u8 as f64);
        v.push(self.to_ki as u8 as f64);
        v.push(self.to_po as u8 as f64);
        v.extend(self.neigh_counts.iter().map(|&c| c as f64));
        v
    }
}

/// Distinct gate neighbours (fanin gates and loads) of every gate, sorted.
pub fn undirected_neighbors(n: &Netlist) -> Vec<Vec<u32>> {
    n.gates()
        .iter()
        .map(|g| {
            let mut v: Vec<u32> = g
                .fanin
                .iter()
                .filter_map(|&s| match s {
                    Signal::Gate(d) if d != g.id => Some(d.0 as u32),
                    _ => None,
                })
                .chain(n.loads(g.id).iter().filter(|&&l| l != g.id).map(|l| l.0 as u32))
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect()
}

fn features_with(n: &Netlist, adj: &[Vec<u32>], g: GateId, stamp: &mut [u32], mark: u32) -> FeatureVector {
    let gate = &n.gates()[g.0];
    let mut f = FeatureVector {
        in_degree: gate.fanin.len() as u32,
        out_degree: (n.loads(g).len() + n.po_fanout(g)) as u32,
        to_pi: gate.fanin.iter().any(|s| matches!(s, Signal::Pi(_))),
        to_ki: gate.fanin.iter().any(|s| matches!(s, Signal::Ki(_))),
        to_po: n.is_po(g),
        neigh_counts: [0; 8],
    };
    stamp[g.0] = mark;
    let mut count = |v: u32, stamp: &mut [u32]| {
        if stamp[v as usize] != mark {
            stamp[v as usize] = mark;
            if let Some(i) = n.gates()[v as usize].gtype.bench_index() {
                f.neigh_counts[i] += 1;
            }
        }
    };
    for &u in &adj[g.0] {
        count(u, stamp);
    }
    for &u in &adj[g.0] {
        for &w in &adj[u as usize] {
            count(w, stamp);
        }
    }
    f
}

pub fn extract_features(n: &Netlist, g: GateId) -> Result<FeatureVector, GraphError> {
    n.gate(g)?;
    let adj = undirected_neighbors(n);
    let mut stamp = vec![0u32; n.num_gates()];
    Ok(features_with(n, &adj, g, &mut stamp, 1))
}

/// Features of every gate, in gate order.
pub fn extract_all(n: &Netlist) -> Vec<FeatureVector> {
    let adj = undirected_neighbors(n);
    let mut stamp = vec![0u32; n.num_gates()];
    n.gates().iter().map(|g| features_with(n, &adj, g.id, &mut stamp, g.id.0 as u32 + 1)).collect()
}

/// One locked netlist as a graph: node `i` is gate `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitGraph {
    pub design: String,
    pub instance: String,
    pub node_names: Vec<String>,
    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub edges: Vec<(u32, u32)>,
    /// Row-major `nodes x FEATURE_DIM`.
    pub features: Vec<f64>,
    pub feature_dim: usize,
    pub labels: Option<Vec<NodeClass>>,
}

impl CircuitGraph {
    pub fn num_nodes(&self) -> usize {
        self.node_names.len()
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn neighbors(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for &(u, v) in &self.edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }
}

pub fn encode(n: &Netlist, labels: Option<&Labels>) -> Result<CircuitGraph, GraphError> {
    let adj = undirected_neighbors(n);
    let mut edges = Vec::new();
    for (u, vs) in adj.iter().enumerate() {
        for &v in vs {
            if (u as u32) < v {
                edges.push((u as u32, v));
            }
        }
    }
    let feats = extract_all(n);
    let features: Vec<f64> = feats.iter().flat_map(|f| f.to_vec()).collect();
    let labels = labels.map(|l| l.for_netlist(n)).transpose()?;
    Ok(CircuitGraph {
        design: n.name().to_string(),
        instance: n.name().to_string(),
        node_names: n.gates().iter().map(|g| g.name.clone()).collect(),
        edges,
        features,
        feature_dim: FEATURE_DIM,
        labels,
    })
}
