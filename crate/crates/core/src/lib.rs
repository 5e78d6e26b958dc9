//! Oracle-less removal attack on logic locking with a graph neural network.

pub mod benchmarks;
pub mod gnn;
pub mod graph;
pub mod labels;
pub mod locking;
pub mod netlist;
pub mod par;
pub mod pipeline;
pub mod postprocess;
pub mod redact;
pub mod selfcheck;

#[cfg(test)]
pub(crate) mod testutil;
