//! Random-walk subgraph sampling for minibatches.

use rand::Rng;

use crate::graph::Csr;

/// Induced subgraph; local node `i` is global node `nodes[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledSubgraph {
    pub nodes: Vec<u32>,
    pub adjacency: Csr,
}

impl SampledSubgraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Each local edge once, `(u, v)` with `u < v`.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        (0..self.num_nodes())
            .flat_map(|u| self.adjacency.row(u).iter().filter(move |&&v| (u as u32) < v).map(move |&v| (u as u32, v)))
            .collect()
    }
}

/// Draws `num_roots` roots (with replacement, at most `|roots|`) and walks
/// `walk_length` uniform steps from each. Walks end early at isolated nodes.
pub fn sample_subgraph<R: Rng>(
    adj: &Csr,
    roots: &[u32],
    num_roots: usize,
    walk_length: usize,
    rng: &mut R,
) -> SampledSubgraph {
    let mut seen = vec![false; adj.num_rows()];
    let mut nodes = Vec::new();
    let mut visit = |v: u32, nodes: &mut Vec<u32>| {
        if !seen[v as usize] {
            seen[v as usize] = true;
            nodes.push(v);
        }
    };
    if !roots.is_empty() {
        for _ in 0..num_roots.clamp(1, roots.len()) {
            let mut v = roots[rng.gen_range(0..roots.len())];
            visit(v, &mut nodes);
            for _ in 0..walk_length {
                let nb = adj.row(v as usize);
                if nb.is_empty() {
                    break;
                }
                v = nb[rng.gen_range(0..nb.len())];
                visit(v, &mut nodes);
            }
        }
    }
    nodes.sort_unstable();
    let adjacency = adj.induced(&nodes);
    SampledSubgraph { nodes, adjacency }
}
