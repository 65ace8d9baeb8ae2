use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DirectedGraph, NodeId};
use crate::{Error, Result};

/// Quadrant probabilities of the recursive matrix generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmatParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for RmatParams {
    fn default() -> Self {
        RmatParams {
            a: 0.7,
            b: 0.1,
            c: 0.1,
            d: 0.1,
        }
    }
}

/// Number of nodes for a graph with `edges` drawn edges: 20% of the edge count, rounded up.
pub fn rmat_node_count(edges: u64) -> usize {
    (edges as usize).div_ceil(5)
}

/// Draw `2^log2_edges` edges with R-MAT over `ceil(0.2 * 2^log2_edges)` nodes.
///
/// Draws landing outside the node range are redrawn; self-loops are dropped
/// and repeated pairs collapsed, so the final edge count can be lower than
/// the number of draws. Every edge gets probability 1; see
/// [`assign_weighted_cascade`].
pub fn generate_rmat(log2_edges: u32, params: RmatParams, seed: u64) -> Result<DirectedGraph> {
    let RmatParams { a, b, c, d } = params;
    if [a, b, c, d].iter().any(|x| !(0.0..=1.0).contains(x)) || (a + b + c + d - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "R-MAT probabilities must be in [0,1] and sum to 1, got {a}+{b}+{c}+{d}"
        )));
    }
    if !(4..=34).contains(&log2_edges) {
        return Err(Error::InvalidParameter(format!(
            "log2_edges must be in 4..=34, got {log2_edges}"
        )));
    }
    let draws = 1u64 << log2_edges;
    let n = rmat_node_count(draws);
    let levels = usize::BITS - (n - 1).leading_zeros();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut seen = HashSet::with_capacity(draws as usize);
    let mut edges = Vec::with_capacity(draws as usize);
    for _ in 0..draws {
        let (src, dst) = loop {
            let (mut row, mut col) = (0usize, 0usize);
            for _ in 0..levels {
                let r: f64 = rng.random();
                let (rb, cb) = if r < a {
                    (0, 0)
                } else if r < a + b {
                    (0, 1)
                } else if r < a + b + c {
                    (1, 0)
                } else {
                    (1, 1)
                };
                row = (row << 1) | rb;
                col = (col << 1) | cb;
            }
            if row < n && col < n {
                break (row as NodeId, col as NodeId);
            }
        };
        if src != dst && seen.insert((src, dst)) {
            edges.push((src, dst, 1.0));
        }
    }
    DirectedGraph::from_edges(n, &edges)
}

/// Weighted cascade: every in-edge of `v` gets probability `1 / in_degree(v)`.
pub fn assign_weighted_cascade(graph: &DirectedGraph) -> Result<DirectedGraph> {
    if graph.edge_count() == 0 {
        return Err(Error::NoEdges);
    }
    graph.map_probabilities(|_, v, _| 1.0 / graph.in_degree(v) as f64)
}
