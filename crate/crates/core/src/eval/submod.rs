use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::graph::{DirectedGraph, NodeId};
use crate::im::InfluenceFunction;
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Relative slack when comparing `f(S) + f(T)` with `f(S | T) + f(S & T)`,
/// so summation rounding in an exactly submodular `f` is not counted.
pub const HOLDS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SubmodularityReport {
    pub pairs_tested: usize,
    pub pairs_held: usize,
    pub holds_ratio: f64,
    /// Mean over violating pairs of `(f(S|T) + f(S&T) - f(S) - f(T)) / (f(S|T) + f(S&T))`,
    /// in percent; `None` when every pair holds.
    pub violation_mape: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairOutcome {
    pub left: f64,
    pub right: f64,
    pub holds: bool,
}

fn draw_set<R: Rng>(rng: &mut R, n: usize, lo: usize, hi: usize) -> Vec<NodeId> {
    let size = rng.random_range(lo..=hi);
    let mut s: Vec<NodeId> = sample(rng, n, size).into_iter().map(|x| x as NodeId).collect();
    s.sort_unstable();
    s
}

/// Seed-set size bounds for a fraction range of `|V|`, at least one node each.
pub fn size_bounds(n: usize, size_range: (f64, f64)) -> Result<(usize, usize)> {
    let (lo, hi) = size_range;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(Error::InvalidParameter(format!("bad size range {size_range:?}")));
    }
    let min = ((lo * n as f64).ceil() as usize).clamp(1, n);
    let max = ((hi * n as f64).floor() as usize).clamp(min, n);
    Ok((min, max))
}

/// Test `f(S) + f(T) >= f(S | T) + f(S & T)` on `n_pairs` random pairs whose
/// sizes are uniform in `size_range * |V|`.
pub fn submodularity_probe<F: InfluenceFunction>(
    g: &DirectedGraph,
    f: &F,
    n_pairs: usize,
    size_range: (f64, f64),
    seed: u64,
) -> Result<(SubmodularityReport, Vec<PairOutcome>)> {
    if n_pairs == 0 {
        return Err(Error::InvalidParameter("n_pairs must be >= 1".into()));
    }
    let n = g.node_count();
    let (lo, hi) = size_bounds(n, size_range)?;
    let outcomes = (0..n_pairs as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(seed, j);
            let s = draw_set(&mut rng, n, lo, hi);
            let t = draw_set(&mut rng, n, lo, hi);
            let union: Vec<NodeId> = {
                let mut u: Vec<NodeId> = s.iter().chain(&t).copied().collect();
                u.sort_unstable();
                u.dedup();
                u
            };
            let inter: Vec<NodeId> = s.iter().copied().filter(|x| t.binary_search(x).is_ok()).collect();
            let left = f.influence(g, &s)? + f.influence(g, &t)?;
            let right = f.influence(g, &union)? + f.influence(g, &inter)?;
            let holds = left >= right - HOLDS_TOLERANCE * right.abs().max(1.0);
            Ok(PairOutcome { left, right, holds })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((summarize(&outcomes), outcomes))
}

pub fn summarize(outcomes: &[PairOutcome]) -> SubmodularityReport {
    let held = outcomes.iter().filter(|o| o.holds).count();
    let violations: Vec<f64> = outcomes
        .iter()
        .filter(|o| !o.holds)
        .map(|o| 100.0 * (o.right - o.left) / o.right)
        .collect();
    SubmodularityReport {
        pairs_tested: outcomes.len(),
        pairs_held: held,
        holds_ratio: held as f64 / outcomes.len().max(1) as f64,
        violation_mape: (!violations.is_empty()).then(|| violations.iter().sum::<f64>() / violations.len() as f64),
    }
}
