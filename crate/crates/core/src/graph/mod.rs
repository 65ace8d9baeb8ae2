//! Directed weighted graphs in compressed sparse row form.
//!
//! Edge weights are activation probabilities. Two CSR indexes are kept: one
//! keyed by source for cascade fan-out, one keyed by destination for
//! aggregation over in-neighbors.

mod io;
mod rmat;

use std::collections::HashMap;
use std::ops::Deref;

pub use io::{load_edge_list, parse_edge_list, write_edge_list, write_node_map};
pub use rmat::{assign_weighted_cascade, generate_rmat, RmatParams};

use crate::{Error, Result};

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct DirectedGraph {
    labels: Vec<String>,
    index: HashMap<String, NodeId>,
    out_offsets: Vec<usize>,
    out_targets: Vec<NodeId>,
    out_probs: Vec<f64>,
    in_offsets: Vec<usize>,
    in_sources: Vec<NodeId>,
    in_probs: Vec<f64>,
}

impl DirectedGraph {
    /// Build a graph over nodes `0..node_count` with decimal labels.
    pub fn from_edges(node_count: usize, edges: &[(NodeId, NodeId, f64)]) -> Result<Self> {
        let labels = (0..node_count).map(|i| i.to_string()).collect();
        Self::from_labeled_edges(labels, edges)
    }

    /// Build a graph whose node `i` carries `labels[i]`.
    pub fn from_labeled_edges(labels: Vec<String>, edges: &[(NodeId, NodeId, f64)]) -> Result<Self> {
        let n = labels.len();
        if n > NodeId::MAX as usize {
            return Err(Error::InvalidParameter(format!("too many nodes: {n}")));
        }
        let mut sorted: Vec<(NodeId, NodeId, f64)> = Vec::with_capacity(edges.len());
        for &(src, dst, p) in edges {
            for id in [src, dst] {
                if id as usize >= n {
                    return Err(Error::NodeOutOfRange {
                        id: id as usize,
                        node_count: n,
                    });
                }
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::ProbabilityOutOfRange(p));
            }
            if src == dst {
                return Err(Error::SelfLoop(labels[src as usize].clone()));
            }
            sorted.push((src, dst, p));
        }
        sorted.sort_unstable_by_key(|&(s, d, _)| (s, d));
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::DuplicateEdge {
                    src: labels[w[0].0 as usize].clone(),
                    dst: labels[w[0].1 as usize].clone(),
                });
            }
        }

        let m = sorted.len();
        let mut out_offsets = vec![0usize; n + 1];
        let mut in_offsets = vec![0usize; n + 1];
        for &(s, d, _) in &sorted {
            out_offsets[s as usize + 1] += 1;
            in_offsets[d as usize + 1] += 1;
        }
        for i in 0..n {
            out_offsets[i + 1] += out_offsets[i];
            in_offsets[i + 1] += in_offsets[i];
        }
        let out_targets = sorted.iter().map(|e| e.1).collect();
        let out_probs = sorted.iter().map(|e| e.2).collect();

        // Sources arrive in ascending order, so each in-list ends up sorted by source id.
        let mut in_sources = vec![0; m];
        let mut in_probs = vec![0.0; m];
        let mut cursor = in_offsets.clone();
        for &(s, d, p) in &sorted {
            let slot = &mut cursor[d as usize];
            in_sources[*slot] = s;
            in_probs[*slot] = p;
            *slot += 1;
        }

        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as NodeId))
            .collect();
        Ok(DirectedGraph {
            labels,
            index,
            out_offsets,
            out_targets,
            out_probs,
            in_offsets,
            in_sources,
            in_probs,
        })
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out_targets.len()
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.labels[id as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id_of(&self, label: &str) -> Option<NodeId> {
        self.index.get(label).copied()
    }

    /// Out-edges of `u` as `(target, probability, edge_index)`.
    ///
    /// `edge_index` is stable and unique in `0..edge_count()`.
    pub fn out_edges(&self, u: NodeId) -> impl Iterator<Item = (NodeId, f64, usize)> + '_ {
        let range = self.out_offsets[u as usize]..self.out_offsets[u as usize + 1];
        range.map(move |e| (self.out_targets[e], self.out_probs[e], e))
    }

    /// In-edges of `v` as `(source, probability)`, sorted by source id.
    pub fn in_edges(&self, v: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        let range = self.in_offsets[v as usize]..self.in_offsets[v as usize + 1];
        self.in_sources[range.clone()]
            .iter()
            .copied()
            .zip(self.in_probs[range].iter().copied())
    }

    /// In-edge CSR arrays: offsets (`|V| + 1`), sources and probabilities.
    pub(crate) fn in_csr(&self) -> (&[usize], &[NodeId], &[f64]) {
        (&self.in_offsets, &self.in_sources, &self.in_probs)
    }

    pub fn in_degree(&self, v: NodeId) -> usize {
        self.in_offsets[v as usize + 1] - self.in_offsets[v as usize]
    }

    pub fn out_degree(&self, u: NodeId) -> usize {
        self.out_offsets[u as usize + 1] - self.out_offsets[u as usize]
    }

    /// All edges as `(src, dst, prob)` in edge-index order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        (0..self.node_count() as NodeId)
            .flat_map(move |u| self.out_edges(u).map(move |(v, p, _)| (u, v, p)))
    }

    /// Same topology and labels with every probability replaced by `f(src, dst, old)`.
    pub fn map_probabilities(&self, mut f: impl FnMut(NodeId, NodeId, f64) -> f64) -> Result<Self> {
        let edges: Vec<_> = self.edges().map(|(u, v, p)| (u, v, f(u, v, p))).collect();
        Self::from_labeled_edges(self.labels.clone(), &edges)
    }

    /// Mean activation probability over all edges.
    pub fn mean_probability(&self) -> f64 {
        if self.edge_count() == 0 {
            return 0.0;
        }
        self.out_probs.iter().sum::<f64>() / self.edge_count() as f64
    }

    /// `w[y] = sum over in-neighbors x of v[x] * p(x, y)`, i.e. the row-vector product `vP`.
    pub fn propagate(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        Ok((0..self.node_count() as NodeId)
            .map(|y| self.in_edges(y).map(|(x, p)| v[x as usize] * p).sum())
            .collect())
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.node_count() {
            return Err(Error::LengthMismatch {
                expected: self.node_count(),
                actual: len,
            });
        }
        Ok(())
    }
}

/// Dense vector of per-node infection probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct InfectionVector(Vec<f64>);

impl InfectionVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::ProbabilityOutOfRange(bad));
        }
        Ok(InfectionVector(values))
    }

    pub fn zeros(n: usize) -> Self {
        InfectionVector(vec![0.0; n])
    }

    /// The 0/1 indicator of a seed set.
    pub fn indicator(n: usize, seeds: &SeedSet) -> Self {
        let mut v = vec![0.0; n];
        for &s in seeds.nodes() {
            v[s as usize] = 1.0;
        }
        InfectionVector(v)
    }

    /// `<1, pi>`, the expected number of infected nodes.
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|x| (0.0..=1.0).contains(x)));
        InfectionVector(values)
    }
}

impl Deref for InfectionVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Nonempty sorted set of node ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SeedSet(Vec<NodeId>);

impl SeedSet {
    pub fn new(mut nodes: Vec<NodeId>, node_count: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptySeedSet);
        }
        nodes.sort_unstable();
        for w in nodes.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidParameter(format!("duplicate seed {}", w[0])));
            }
        }
        if let Some(&last) = nodes.last() {
            if last as usize >= node_count {
                return Err(Error::NodeOutOfRange {
                    id: last as usize,
                    node_count,
                });
            }
        }
        Ok(SeedSet(nodes))
    }

    /// Parse a comma-separated list of node labels.
    pub fn parse_labels(graph: &DirectedGraph, list: &str) -> Result<Self> {
        let ids = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|l| graph.id_of(l).ok_or_else(|| Error::UnknownLabel(l.to_string())))
            .collect::<Result<Vec<_>>>()?;
        SeedSet::new(ids, graph.node_count())
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.0.binary_search(&v).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn path3() -> DirectedGraph {
        DirectedGraph::from_edges(3, &[(0, 1, 0.5), (1, 2, 0.5)]).unwrap()
    }

    pub(crate) fn diamond() -> DirectedGraph {
        DirectedGraph::from_edges(4, &[(0, 1, 0.5), (0, 2, 0.5), (1, 3, 0.5), (2, 3, 0.5)]).unwrap()
    }

    #[test]
    fn propagate_path() {
        let w = path3().propagate(&[0.0, 0.5, 0.0]).unwrap();
        assert_eq!(w, vec![0.0, 0.0, 0.25]);
    }

    #[test]
    fn propagate_zero_and_diamond() {
        let g = diamond();
        assert_eq!(g.propagate(&[0.0; 4]).unwrap(), vec![0.0; 4]);
        assert_eq!(g.propagate(&[1.0, 0.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn propagate_length_mismatch() {
        assert!(matches!(
            path3().propagate(&[0.0; 2]),
            Err(Error::LengthMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(matches!(
            DirectedGraph::from_edges(2, &[(0, 1, 0.5), (0, 1, 0.2)]),
            Err(Error::DuplicateEdge { .. })
        ));
        assert!(matches!(DirectedGraph::from_edges(2, &[(1, 1, 0.5)]), Err(Error::SelfLoop(_))));
        assert!(matches!(
            DirectedGraph::from_edges(2, &[(0, 1, -0.1)]),
            Err(Error::ProbabilityOutOfRange(_))
        ));
        assert!(matches!(
            DirectedGraph::from_edges(2, &[(0, 2, 0.1)]),
            Err(Error::NodeOutOfRange { .. })
        ));
    }

    #[test]
    fn indexes_agree() {
        let g = diamond();
        let mut from_out: Vec<_> = g.edges().collect();
        let mut from_in: Vec<_> = (0..4)
            .flat_map(|v| g.in_edges(v).map(move |(u, p)| (u, v, p)))
            .collect();
        from_out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        from_in.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(from_out, from_in);
    }

    #[test]
    fn seed_set_rules() {
        assert!(matches!(SeedSet::new(vec![], 3), Err(Error::EmptySeedSet)));
        assert!(SeedSet::new(vec![1, 1], 3).is_err());
        assert!(SeedSet::new(vec![3], 3).is_err());
        assert_eq!(SeedSet::new(vec![2, 0], 3).unwrap().nodes(), &[0, 2]);
    }

    fn small_graph() -> impl Strategy<Value = (usize, Vec<(u32, u32, f64)>)> {
        (2usize..64).prop_flat_map(|n| {
            let edge = (0..n as u32, 0..n as u32, 0.0f64..=1.0);
            (Just(n), prop::collection::vec(edge, 0..200))
        })
    }

    fn dedup(edges: Vec<(u32, u32, f64)>) -> Vec<(u32, u32, f64)> {
        let mut seen = std::collections::HashSet::new();
        edges
            .into_iter()
            .filter(|&(u, v, _)| u != v && seen.insert((u, v)))
            .collect()
    }

    proptest! {
        #[test]
        fn propagate_matches_dense_product(
            (n, edges) in small_graph(),
            seed in prop::collection::vec(-1.0f64..1.0, 64),
        ) {
            let edges = dedup(edges);
            let g = DirectedGraph::from_edges(n, &edges).unwrap();
            let mut dense = vec![vec![0.0; n]; n];
            for &(u, v, p) in &edges {
                dense[u as usize][v as usize] = p;
            }
            let v = &seed[..n];
            let got = g.propagate(v).unwrap();
            for y in 0..n {
                let want: f64 = (0..n).map(|x| v[x] * dense[x][y]).sum();
                prop_assert!((got[y] - want).abs() <= 1e-12);
            }
        }

        #[test]
        fn propagate_is_linear(
            (n, edges) in small_graph(),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
            x in prop::collection::vec(-1.0f64..1.0, 64),
            y in prop::collection::vec(-1.0f64..1.0, 64),
        ) {
            let g = DirectedGraph::from_edges(n, &dedup(edges)).unwrap();
            let (x, y) = (&x[..n], &y[..n]);
            let combo: Vec<f64> = x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
            let lhs = g.propagate(&combo).unwrap();
            let px = g.propagate(x).unwrap();
            let py = g.propagate(y).unwrap();
            for i in 0..n {
                prop_assert!((lhs[i] - (a * px[i] + b * py[i])).abs() <= 1e-12);
            }
        }
    }
}
