use crate::graph::{DirectedGraph, InfectionVector, NodeId, SeedSet};
use crate::{Error, Result};

/// Largest edge count accepted by the live-edge enumeration.
pub const MAX_EXACT_EDGES: usize = 22;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    /// `pi_0 ..= pi_h` with trailing repeats removed.
    pub per_step: Vec<InfectionVector>,
    pub influence: f64,
}

/// Visit every live-edge realization with nonzero probability, passing its
/// probability and the live-edge BFS distance of every node (`u32::MAX` if unreached).
fn for_each_realization(g: &DirectedGraph, seeds: &[NodeId], mut visit: impl FnMut(f64, &[u32])) -> Result<()> {
    let m = g.edge_count();
    if m > MAX_EXACT_EDGES {
        return Err(Error::TooManyEdges {
            edges: m,
            limit: MAX_EXACT_EDGES,
        });
    }
    let n = g.node_count();
    let probs: Vec<f64> = g.edges().map(|(_, _, p)| p).collect();
    let mut dist = vec![u32::MAX; n];
    let mut queue = Vec::with_capacity(n);
    for mask in 0u64..(1u64 << m) {
        let mut weight = 1.0;
        for (e, &p) in probs.iter().enumerate() {
            weight *= if mask >> e & 1 == 1 { p } else { 1.0 - p };
        }
        if weight == 0.0 {
            continue;
        }
        dist.fill(u32::MAX);
        queue.clear();
        for &s in seeds {
            dist[s as usize] = 0;
            queue.push(s);
        }
        let mut head = 0;
        while head < queue.len() {
            let u = queue[head];
            head += 1;
            for (v, _, e) in g.out_edges(u) {
                if mask >> e & 1 == 1 && dist[v as usize] == u32::MAX {
                    dist[v as usize] = dist[u as usize] + 1;
                    queue.push(v);
                }
            }
        }
        visit(weight, &dist);
    }
    Ok(())
}

/// Exact step-limited infection probabilities by enumerating all `2^|E|` live-edge subsets.
///
/// `influence` is accumulated as the probability-weighted count of reached
/// nodes, which equals the sum of the final vector up to rounding.
pub fn exact_influence(g: &DirectedGraph, seeds: &SeedSet) -> Result<ExactResult> {
    let n = g.node_count();
    let mut at_distance: Vec<Vec<f64>> = vec![vec![0.0; n]];
    let mut influence = 0.0;
    for_each_realization(g, seeds.nodes(), |w, dist| {
        let mut reached = 0usize;
        for (x, &d) in dist.iter().enumerate() {
            if d == u32::MAX {
                continue;
            }
            reached += 1;
            let d = d as usize;
            if at_distance.len() <= d {
                at_distance.resize_with(d + 1, || vec![0.0; n]);
            }
            at_distance[d][x] += w;
        }
        influence += w * reached as f64;
    })?;

    let mut per_step: Vec<InfectionVector> = Vec::with_capacity(at_distance.len());
    let mut acc = vec![0.0; n];
    for layer in &at_distance {
        for (a, b) in acc.iter_mut().zip(layer) {
            *a += b;
        }
        let mut v: Vec<f64> = acc.iter().map(|x| x.min(1.0)).collect();
        // Realization weights sum to 1 only up to rounding; seeds are infected in all of them.
        for &s in seeds.nodes() {
            v[s as usize] = 1.0;
        }
        let v = InfectionVector::from_vec_unchecked(v);
        if per_step.last() != Some(&v) {
            per_step.push(v);
        }
    }
    Ok(ExactResult { per_step, influence })
}

/// Exact influence of a possibly empty seed list (`f(empty) = 0`).
pub fn exact_set_influence(g: &DirectedGraph, seeds: &[NodeId]) -> Result<f64> {
    if seeds.is_empty() {
        return Ok(0.0);
    }
    let mut influence = 0.0;
    for_each_realization(g, seeds, |w, dist| {
        influence += w * dist.iter().filter(|&&d| d != u32::MAX).count() as f64;
    })?;
    Ok(influence)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_closed_form() {
        let g = DirectedGraph::from_edges(3, &[(0, 1, 0.5), (1, 2, 0.5)]).unwrap();
        let r = exact_influence(&g, &SeedSet::new(vec![0], 3).unwrap()).unwrap();
        let steps: Vec<&[f64]> = r.per_step.iter().map(|v| v.as_slice()).collect();
        assert_eq!(steps, vec![&[1.0, 0.0, 0.0][..], &[1.0, 0.5, 0.0], &[1.0, 0.5, 0.25]]);
        assert_eq!(r.influence, 1.75);
    }

    #[test]
    fn diamond_enumeration() {
        let g = DirectedGraph::from_edges(4, &[(0, 1, 0.5), (0, 2, 0.5), (1, 3, 0.5), (2, 3, 0.5)]).unwrap();
        let r = exact_influence(&g, &SeedSet::new(vec![0], 4).unwrap()).unwrap();
        assert!((r.per_step.last().unwrap()[3] - 0.4375).abs() < 1e-15);
        assert!((r.influence - 2.4375).abs() < 1e-15);
    }

    #[test]
    fn saturation() {
        let g = DirectedGraph::from_edges(4, &[(0, 1, 0.3), (1, 2, 0.6), (3, 0, 0.2)]).unwrap();
        let r = exact_influence(&g, &SeedSet::new(vec![0, 1, 2, 3], 4).unwrap()).unwrap();
        assert_eq!(r.per_step.len(), 1);
        assert_eq!(r.per_step[0].as_slice(), &[1.0; 4]);
        assert!((r.influence - 4.0).abs() < 1e-12);
    }

    #[test]
    fn guard() {
        let edges: Vec<_> = (0..23).map(|i| (i, i + 1, 0.5)).collect();
        let g = DirectedGraph::from_edges(24, &edges).unwrap();
        assert!(matches!(
            exact_influence(&g, &SeedSet::new(vec![0], 24).unwrap()),
            Err(Error::TooManyEdges { edges: 23, .. })
        ));
    }

    #[test]
    fn empty_set_is_zero() {
        let g = DirectedGraph::from_edges(2, &[(0, 1, 0.5)]).unwrap();
        assert_eq!(exact_set_influence(&g, &[]).unwrap(), 0.0);
        assert_eq!(exact_set_influence(&g, &[0]).unwrap(), 1.5);
    }
}
