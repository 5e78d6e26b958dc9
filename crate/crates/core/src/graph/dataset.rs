use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{CircuitGraph, GraphError, FEATURE_DIM, FEATURE_NAMES};
use crate::labels::NodeClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn index(self) -> usize {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

/// Compressed sparse rows; row `i` lists the neighbours of node `i`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Csr {
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
}

impl Csr {
    pub fn from_lists(lists: &[Vec<u32>]) -> Csr {
        let mut indptr = Vec::with_capacity(lists.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        for l in lists {
            indices.extend_from_slice(l);
            indptr.push(indices.len());
        }
        Csr { indptr, indices }
    }

    pub fn num_rows(&self) -> usize {
        self.indptr.len().saturating_sub(1)
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    /// Subgraph induced by `nodes` (given in the new local order).
    pub fn induced(&self, nodes: &[u32]) -> Csr {
        let mut local = std::collections::HashMap::with_capacity(nodes.len());
        for (i, &n) in nodes.iter().enumerate() {
            local.insert(n, i as u32);
        }
        let lists: Vec<Vec<u32>> = nodes
            .iter()
            .map(|&n| self.row(n as usize).iter().filter_map(|v| local.get(v).copied()).collect())
            .collect();
        Csr::from_lists(&lists)
    }
}

/// Several graphs under one global node index with block-diagonal adjacency.
///
/// Label reads go through [`Dataset::label`], which counts accesses per split
/// so that tests can audit that held-out labels were never consulted.
#[derive(Debug)]
pub struct Dataset {
    graphs: Vec<CircuitGraph>,
    offsets: Vec<usize>,
    adjacency: Csr,
    features: Vec<f64>,
    feature_dim: usize,
    splits: Vec<Split>,
    node_graph: Vec<u32>,
    label_reads: [AtomicU64; 3],
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Dataset {
            graphs: self.graphs.clone(),
            offsets: self.offsets.clone(),
            adjacency: self.adjacency.clone(),
            features: self.features.clone(),
            feature_dim: self.feature_dim,
            splits: self.splits.clone(),
            node_graph: self.node_graph.clone(),
            label_reads: Default::default(),
        }
    }
}

pub fn batch(graphs: Vec<CircuitGraph>) -> Result<Dataset, GraphError> {
    let feature_dim = graphs.first().map_or(FEATURE_DIM, |g| g.feature_dim);
    let mut offsets = vec![0usize];
    let mut lists: Vec<Vec<u32>> = Vec::new();
    let mut features = Vec::new();
    let mut node_graph = Vec::new();
    for (gi, g) in graphs.iter().enumerate() {
        if g.feature_dim != feature_dim {
            return Err(GraphError::SchemaMismatch { expected: feature_dim, got: g.feature_dim });
        }
        let base = *offsets.last().unwrap_or(&0) as u32;
        for nb in g.neighbors() {
            lists.push(nb.into_iter().map(|v| v + base).collect());
        }
        features.extend_from_slice(&g.features);
        node_graph.extend(std::iter::repeat_n(gi as u32, g.num_nodes()));
        offsets.push(offsets.last().unwrap_or(&0) + g.num_nodes());
    }
    let splits = vec![Split::Train; graphs.len()];
    Ok(Dataset {
        graphs,
        offsets,
        adjacency: Csr::from_lists(&lists),
        features,
        feature_dim,
        splits,
        node_graph,
        label_reads: Default::default(),
    })
}

/// All graphs of `test_design` become TEST, all of `val_design` VAL, the rest TRAIN.
pub fn split_loo(ds: &Dataset, test_design: &str, val_design: &str) -> Result<Dataset, GraphError> {
    let designs = ds.designs();
    for d in [test_design, val_design] {
        if !designs.contains(d) {
            return Err(GraphError::UnknownDesign(d.to_string()));
        }
    }
    if test_design == val_design {
        return Err(GraphError::SameDesign(test_design.to_string()));
    }
    let mut out = ds.clone();
    out.splits = ds
        .graphs
        .iter()
        .map(|g| {
            if g.design == test_design {
                Split::Test
            } else if g.design == val_design {
                Split::Val
            } else {
                Split::Train
            }
        })
        .collect();
    if !out.splits.contains(&Split::Train) {
        return Err(GraphError::NoTrainingGraphs);
    }
    Ok(out)
}

impl Dataset {
    pub fn graphs(&self) -> &[CircuitGraph] {
        &self.graphs
    }

    pub fn num_graphs(&self) -> usize {
        self.graphs.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_graph.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn adjacency(&self) -> &Csr {
        &self.adjacency
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn feature_row(&self, node: usize) -> &[f64] {
        &self.features[node * self.feature_dim..(node + 1) * self.feature_dim]
    }

    pub fn graph_of(&self, node: usize) -> usize {
        self.node_graph[node] as usize
    }

    pub fn graph_split(&self, g: usize) -> Split {
        self.splits[g]
    }

    pub fn node_split(&self, node: usize) -> Split {
        self.splits[self.node_graph[node] as usize]
    }

    pub fn set_split(&mut self, g: usize, s: Split) {
        self.splits[g] = s;
    }

    pub fn designs(&self) -> BTreeSet<&str> {
        self.graphs.iter().map(|g| g.design.as_str()).collect()
    }

    pub fn nodes_in(&self, split: Split) -> Vec<u32> {
        (0..self.num_nodes() as u32).filter(|&n| self.node_split(n as usize) == split).collect()
    }

    pub fn graphs_in(&self, split: Split) -> Vec<usize> {
        (0..self.graphs.len()).filter(|&g| self.splits[g] == split).collect()
    }

    /// Ground-truth class of a node, if the graph carries labels. Every call
    /// is counted against the node's split.
    pub fn label(&self, node: usize) -> Option<NodeClass> {
        let g = self.node_graph[node] as usize;
        self.label_reads[self.splits[g].index()].fetch_add(1, Ordering::Relaxed);
        let local = node - self.offsets[g];
        self.graphs[g].labels.as_ref().map(|l| l[local])
    }

    pub fn label_reads(&self, split: Split) -> u64 {
        self.label_reads[split.index()].load(Ordering::Relaxed)
    }

    /// Copy of the dataset with every feature row transformed by `scaler`.
    pub fn scaled(&self, scaler: &Scaler) -> Dataset {
        let mut out = self.clone();
        scaler.apply(&mut out.features, self.feature_dim);
        for g in &mut out.graphs {
            scaler.apply(&mut g.features, self.feature_dim);
        }
        out
    }
}

/// Per-feature standardisation fitted on TRAIN nodes only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(ds: &Dataset) -> Scaler {
        let d = ds.feature_dim();
        let nodes = ds.nodes_in(Split::Train);
        let count = nodes.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for &n in &nodes {
            for (m, x) in mean.iter_mut().zip(ds.feature_row(n as usize)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; d];
        for &n in &nodes {
            for ((v, x), m) in var.iter_mut().zip(ds.feature_row(n as usize)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.iter().map(|v| (v / count).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        Scaler { mean, std }
    }

    pub fn apply(&self, features: &mut [f64], dim: usize) {
        for row in features.chunks_mut(dim) {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GraphsFile {
    feature_dim: usize,
    feature_names: Vec<String>,
    graphs: Vec<GraphEntry>,
}

#[derive(Serialize, Deserialize)]
struct GraphEntry {
    design: String,
    instance: String,
    offset: usize,
    node_names: Vec<String>,
    edges: Vec<(u32, u32)>,
    labeled: bool,
}

#[derive(Serialize, Deserialize)]
struct SplitEntry {
    instance: String,
    design: String,
    split: Split,
}

fn io_err(file: &str, e: impl std::fmt::Display) -> GraphError {
    GraphError::Io { file: file.to_string(), message: e.to_string() }
}

/// Writes graphs.json, features.csv, labels.csv and splits.json into `dir`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<(), GraphError> {
    fs::create_dir_all(dir).map_err(|e| io_err(&dir.display().to_string(), e))?;
    let names: Vec<String> = if ds.feature_dim == FEATURE_DIM {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..ds.feature_dim).map(|i| format!("f{i}")).collect()
    };
    let gf = GraphsFile {
        feature_dim: ds.feature_dim,
        feature_names: names.clone(),
        graphs: ds
            .graphs
            .iter()
            .enumerate()
            .map(|(i, g)| GraphEntry {
                design: g.design.clone(),
                instance: g.instance.clone(),
                offset: ds.offsets[i],
                node_names: g.node_names.clone(),
                edges: g.edges.clone(),
                labeled: g.labels.is_some(),
            })
            .collect(),
    };
    let write = |name: &str, text: String| fs::write(dir.join(name), text).map_err(|e| io_err(name, e));
    write("graphs.json", serde_json::to_string_pretty(&gf).map_err(|e| io_err("graphs.json", e))? + "\n")?;

    let mut csv = String::from("node");
    for n in &names {
        csv.push(',');
        csv.push_str(n);
    }
    csv.push('\n');
    for node in 0..ds.num_nodes() {
        let _ = write!(csv, "{node}");
        for x in ds.feature_row(node) {
            let _ = write!(csv, ",{x}");
        }
        csv.push('\n');
    }
    write("features.csv", csv)?;

    let mut lab = String::from("node,class\n");
    for (gi, g) in ds.graphs.iter().enumerate() {
        if let Some(l) = &g.labels {
            for (i, c) in l.iter().enumerate() {
                let _ = writeln!(lab, "{},{}", ds.offsets[gi] + i, c.name());
            }
        }
    }
    write("labels.csv", lab)?;

    let splits: Vec<SplitEntry> = ds
        .graphs
        .iter()
        .zip(&ds.splits)
        .map(|(g, &s)| SplitEntry { instance: g.instance.clone(), design: g.design.clone(), split: s })
        .collect();
    write("splits.json", serde_json::to_string_pretty(&splits).map_err(|e| io_err("splits.json", e))? + "\n")?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, GraphError> {
    let read = |name: &str| fs::read_to_string(dir.join(name)).map_err(|e| io_err(name, e));
    let gf: GraphsFile = serde_json::from_str(&read("graphs.json")?).map_err(|e| io_err("graphs.json", e))?;
    let splits: Vec<SplitEntry> =
        serde_json::from_str(&read("splits.json")?).map_err(|e| io_err("splits.json", e))?;
    let total: usize = gf.graphs.iter().map(|g| g.node_names.len()).sum();

    let mut features = vec![0.0; total * gf.feature_dim];
    for (i, line) in read("features.csv")?.lines().skip(1).enumerate() {
        let mut cols = line.split(',');
        let node: usize = cols
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| io_err("features.csv", format!("line {}: bad node id", i + 2)))?;
        if node >= total {
            return Err(io_err("features.csv", format!("line {}: node {node} out of range", i + 2)));
        }
        for (j, c) in cols.enumerate().take(gf.feature_dim) {
            features[node * gf.feature_dim + j] =
                c.parse().map_err(|_| io_err("features.csv", format!("line {}: bad value `{c}`", i + 2)))?;
        }
    }
    let mut labels: Vec<Option<NodeClass>> = vec![None; total];
    for (i, line) in read("labels.csv")?.lines().skip(1).enumerate() {
        let (n, c) = line.split_once(',').ok_or_else(|| io_err("labels.csv", format!("line {}", i + 2)))?;
        let n: usize = n.parse().map_err(|_| io_err("labels.csv", format!("line {}: bad node", i + 2)))?;
        let c: NodeClass = c.parse().map_err(|e| io_err("labels.csv", format!("line {}: {e}", i + 2)))?;
        if n >= total {
            return Err(io_err("labels.csv", format!("line {}: node {n} out of range", i + 2)));
        }
        labels[n] = Some(c);
    }

    let mut graphs = Vec::with_capacity(gf.graphs.len());
    for e in gf.graphs {
        let range = e.offset..e.offset + e.node_names.len();
        let l = if e.labeled {
            Some(
                labels[range.clone()]
                    .iter()
                    .map(|c| c.ok_or_else(|| io_err("labels.csv", format!("missing label in {}", e.instance))))
                    .collect::<Result<Vec<_>, _>>()?,
            )
        } else {
            None
        };
        graphs.push(CircuitGraph {
            design: e.design,
            instance: e.instance,
            node_names: e.node_names,
            edges: e.edges,
            features: features[range.start * gf.feature_dim..range.end * gf.feature_dim].to_vec(),
            feature_dim: gf.feature_dim,
            labels: l,
        });
    }
    let mut ds = batch(graphs)?;
    if splits.len() != ds.num_graphs() {
        return Err(io_err("splits.json", "graph count mismatch"));
    }
    for (i, s) in splits.iter().enumerate() {
        if s.instance != ds.graphs[i].instance {
            return Err(io_err("splits.json", format!("entry {i} names `{}`", s.instance)));
        }
        ds.splits[i] = s.split;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::encode;
    use crate::netlist::generate;

    fn graph(design: &str, gates: usize, seed: u64) -> CircuitGraph {
        let spec = generate::RandomCircuit { inputs: 4, key_inputs: 0, gates, max_fanin: 3, seed };
        let n = generate::random_netlist(design, &spec);
        let mut g = encode(&n, None).unwrap();
        g.instance = format!("{design}_{seed}");
        g
    }

    #[test]
    fn single_graph_batch_is_identity() {
        let g = graph("a", 12, 0);
        let ds = batch(vec![g.clone()]).unwrap();
        assert_eq!(ds.graphs()[0], g);
        assert_eq!(ds.features(), &g.features[..]);
        let adj = g.neighbors();
        for (i, row) in adj.iter().enumerate() {
            assert_eq!(ds.adjacency().row(i), &row[..]);
        }
    }

    #[test]
    fn block_diagonal() {
        let a = graph("a", 3, 1);
        let b = graph("b", 5, 2);
        let ds = batch(vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(ds.num_nodes(), 8);
        for i in 0..8 {
            for &j in ds.adjacency().row(i) {
                assert_eq!(i < 3, (j as usize) < 3, "edge {i}-{j} crosses blocks");
            }
        }
        let bn = b.neighbors();
        for i in 0..5 {
            let shifted: Vec<u32> = bn[i].iter().map(|v| v + 3).collect();
            assert_eq!(ds.adjacency().row(i + 3), &shifted[..]);
        }
    }

    #[test]
    fn schema_mismatch() {
        let a = graph("a", 3, 1);
        let mut b = graph("b", 3, 2);
        b.feature_dim = 4;
        assert!(matches!(batch(vec![a, b]), Err(GraphError::SchemaMismatch { .. })));
    }

    #[test]
    fn loo_split_partitions() {
        let gs = vec![graph("a", 5, 0), graph("a", 5, 1), graph("b", 5, 2), graph("c", 5, 3), graph("d", 5, 4)];
        let ds = split_loo(&batch(gs).unwrap(), "b", "c").unwrap();
        assert_eq!(ds.graphs_in(Split::Test), vec![2]);
        assert_eq!(ds.graphs_in(Split::Val), vec![3]);
        assert_eq!(ds.graphs_in(Split::Train), vec![0, 1, 4]);
        let two = batch(vec![graph("a", 5, 0), graph("b", 5, 1)]).unwrap();
        assert_eq!(split_loo(&two, "a", "b").unwrap_err(), GraphError::NoTrainingGraphs);
        assert!(matches!(split_loo(&two, "a", "a"), Err(GraphError::SameDesign(_))));
        assert!(matches!(split_loo(&two, "a", "z"), Err(GraphError::UnknownDesign(_))));
    }

    #[test]
    fn serialization_round_trip() {
        let mut g = graph("a", 20, 0);
        g.labels = Some(vec![NodeClass::Design; 20]);
        let gs = vec![g, graph("b", 7, 1), graph("c", 9, 2)];
        let ds = split_loo(&batch(gs).unwrap(), "b", "c").unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.graphs(), ds.graphs());
        assert_eq!(back.graphs_in(Split::Test), ds.graphs_in(Split::Test));
        let header = fs::read_to_string(dir.path().join("features.csv")).unwrap();
        assert!(header.starts_with("node,in_degree,out_degree,to_pi,to_ki,to_po,n_and"));
    }

    #[test]
    fn label_reads_are_counted_per_split() {
        let mut g = graph("a", 4, 0);
        g.labels = Some(vec![NodeClass::Design; 4]);
        let ds = batch(vec![g, graph("b", 3, 1), graph("c", 3, 2)]).unwrap();
        let ds = split_loo(&ds, "b", "c").unwrap();
        ds.label(0);
        ds.label(1);
        assert_eq!(ds.label(5), None);
        assert_eq!(ds.label_reads(Split::Train), 2);
        assert_eq!(ds.label_reads(Split::Test), 1);
    }

    #[test]
    fn scaler_uses_train_only() {
        let gs = vec![graph("a", 10, 0), graph("b", 10, 1), graph("c", 10, 2)];
        let ds = split_loo(&batch(gs).unwrap(), "b", "c").unwrap();
        let s = Scaler::fit(&ds);
        let scaled = ds.scaled(&s);
        let train = ds.nodes_in(Split::Train);
        for j in 0..ds.feature_dim() {
            let m: f64 = train.iter().map(|&n| scaled.feature_row(n as usize)[j]).sum::<f64>() / train.len() as f64;
            assert!(m.abs() < 1e-9);
        }
    }
}
