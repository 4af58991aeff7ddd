//! Directed session graphs.
//!
//! Nodes are the distinct items of a prefix in first-occurrence order and
//! every consecutive click pair adds the edge `prefix[t] -> prefix[t+1]`.
//! `a_out` row `i` spreads node `i`'s outgoing edges uniformly over its
//! out-degree; `a_in` row `i` does the same for incoming edges. Rows of
//! nodes without edges in that direction are all zero.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EdgeWeighting {
    /// A repeated transition contributes one edge.
    #[default]
    Binary,
    /// Edges are weighted by how often the transition occurs.
    Counted,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SessionGraph {
    nodes: Vec<u32>,
    a_in: Vec<f64>,
    a_out: Vec<f64>,
    alias: Vec<usize>,
    edges: usize,
}

impl SessionGraph {
    pub fn build(prefix: &[u32]) -> Result<Self> {
        Self::build_with(prefix, EdgeWeighting::Binary)
    }

    pub fn build_with(prefix: &[u32], weighting: EdgeWeighting) -> Result<Self> {
        if prefix.is_empty() {
            return Err(Error::contract("session graph of an empty prefix"));
        }
        if prefix.contains(&0) {
            return Err(Error::contract("padding index inside a session prefix"));
        }
        let mut nodes: Vec<u32> = Vec::new();
        let alias: Vec<usize> = prefix
            .iter()
            .map(|&item| match nodes.iter().position(|&n| n == item) {
                Some(p) => p,
                None => {
                    nodes.push(item);
                    nodes.len() - 1
                }
            })
            .collect();

        let n = nodes.len();
        let mut counts = vec![0.0f64; n * n];
        for w in alias.windows(2) {
            let c = &mut counts[w[0] * n + w[1]];
            *c = match weighting {
                EdgeWeighting::Binary => 1.0,
                EdgeWeighting::Counted => *c + 1.0,
            };
        }
        let edges = counts.iter().filter(|&&c| c > 0.0).count();

        let mut a_out = vec![0.0; n * n];
        let mut a_in = vec![0.0; n * n];
        for i in 0..n {
            let out_deg: f64 = (0..n).map(|j| counts[i * n + j]).sum();
            let in_deg: f64 = (0..n).map(|j| counts[j * n + i]).sum();
            for j in 0..n {
                if out_deg > 0.0 {
                    a_out[i * n + j] = counts[i * n + j] / out_deg;
                }
                if in_deg > 0.0 {
                    a_in[i * n + j] = counts[j * n + i] / in_deg;
                }
            }
        }
        Ok(SessionGraph {
            nodes,
            a_in,
            a_out,
            alias,
            edges,
        })
    }

    /// Distinct items in first-occurrence order.
    pub fn nodes(&self) -> &[u32] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Sequence position -> node position.
    pub fn alias(&self) -> &[usize] {
        &self.alias
    }

    /// Number of distinct directed edges.
    pub fn edge_count(&self) -> usize {
        self.edges
    }

    /// Row-major `n × n` incoming adjacency.
    pub fn a_in(&self) -> &[f64] {
        &self.a_in
    }

    /// Row-major `n × n` outgoing adjacency.
    pub fn a_out(&self) -> &[f64] {
        &self.a_out
    }

    pub fn a_in_row(&self, i: usize) -> &[f64] {
        let n = self.node_count();
        &self.a_in[i * n..(i + 1) * n]
    }

    pub fn a_out_row(&self, i: usize) -> &[f64] {
        let n = self.node_count();
        &self.a_out[i * n..(i + 1) * n]
    }

    pub fn a_in_tensor<T: Real>(&self) -> Tensor<T> {
        let n = self.node_count();
        Tensor::from_f64(&[n, n], &self.a_in).expect("square adjacency")
    }

    pub fn a_out_tensor<T: Real>(&self) -> Tensor<T> {
        let n = self.node_count();
        Tensor::from_f64(&[n, n], &self.a_out).expect("square adjacency")
    }
}
