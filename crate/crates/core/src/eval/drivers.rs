use std::time::Instant;

use rayon::prelude::*;

use super::stats::{correlation, CorrelationReport};
use crate::cascade::{sample_seed_set, seed_size_cap};
use crate::graph::{assign_weighted_cascade, generate_rmat, RmatParams, SeedSet};
use crate::im::{Backend, InfluenceFunction};
use crate::model::{estimate_influence_with, ModelParams, StepWorkspace};
use crate::rng::{derive_seed, stream_rng};
use crate::{DirectedGraph, Error, Result};

/// Largest R-MAT size the scalability driver will generate.
pub const SCALE_LOG2_CAP: u32 = 24;
/// Timed batches per graph; the fastest is reported to damp scheduler noise.
pub const SCALE_REPEATS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct IeSample {
    pub seed_count: usize,
    pub truth: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IeEvaluation {
    pub report: CorrelationReport,
    pub samples: Vec<IeSample>,
}

/// Compare `estimator` against `truth` on `n_sets` random seed sets with
/// sizes uniform in `[1, max(1, |V| / 50)]`.
pub fn compare_estimators<E: InfluenceFunction, T: InfluenceFunction>(
    g: &DirectedGraph,
    estimator: &E,
    truth: &T,
    n_sets: usize,
    seed: u64,
) -> Result<IeEvaluation> {
    let n = g.node_count();
    let samples = (0..n_sets as u64)
        .into_par_iter()
        .map(|j| {
            let s = sample_seed_set(&mut stream_rng(seed, j), n, seed_size_cap(n));
            Ok(IeSample {
                seed_count: s.len(),
                truth: truth.influence(g, s.nodes())?,
                estimate: estimator.influence(g, s.nodes())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let t: Vec<f64> = samples.iter().map(|s| s.truth).collect();
    let e: Vec<f64> = samples.iter().map(|s| s.estimate).collect();
    Ok(IeEvaluation {
        report: correlation(&t, &e)?,
        samples,
    })
}

/// Surrogate versus Monte Carlo with `runs` simulations per set.
pub fn run_ie_eval(g: &DirectedGraph, model: &ModelParams, n_sets: usize, runs: usize, seed: u64) -> Result<IeEvaluation> {
    if runs == 0 {
        return Err(Error::InvalidParameter("runs must be >= 1".into()));
    }
    let truth = Backend::MonteCarlo {
        runs,
        seed: derive_seed(seed, u64::MAX),
    };
    compare_estimators(g, &Backend::Surrogate(model.clone()), &truth, n_sets, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleRow {
    pub log2_edges: u32,
    pub nodes: usize,
    pub edges: usize,
    pub estimations: usize,
    /// Fastest of [`SCALE_REPEATS`] batches of `estimations` inferences.
    pub seconds: f64,
    /// `seconds / (estimations * s)`.
    pub seconds_per_stack: f64,
}

/// Time `estimations` stacked inferences on weighted-cascade R-MAT graphs of
/// each size. Graph generation and seed sampling are not timed; seed-set
/// sizes are uniform in `[1, max(1, |V| / 10)]`.
pub fn run_scalability(
    log2_edges: &[u32],
    estimations: usize,
    model: &ModelParams,
    seed: u64,
) -> Result<Vec<ScaleRow>> {
    if estimations == 0 {
        return Err(Error::InvalidParameter("estimations must be >= 1".into()));
    }
    if let Some(&big) = log2_edges.iter().find(|&&l| l > SCALE_LOG2_CAP) {
        return Err(Error::InvalidParameter(format!(
            "2^{big} edges exceeds the cap of 2^{SCALE_LOG2_CAP}"
        )));
    }
    model.validate_shapes()?;
    let mut cases = Vec::with_capacity(log2_edges.len());
    for (i, &l) in log2_edges.iter().enumerate() {
        let g = assign_weighted_cascade(&generate_rmat(l, RmatParams::default(), derive_seed(seed, i as u64))?)?;
        let n = g.node_count();
        let cap = (n / 10).max(1);
        let mut rng = stream_rng(seed, (1 << 32) + i as u64);
        let sets: Vec<SeedSet> = (0..estimations).map(|_| sample_seed_set(&mut rng, n, cap)).collect();
        // one untimed pass sizes the scratch buffers
        let mut ws = StepWorkspace::default();
        estimate_influence_with(&g, &sets[0], model, &mut ws)?;
        cases.push((l, g, sets, ws, f64::INFINITY));
    }
    // repeats are interleaved across sizes so a slow spell of the machine
    // does not land on a single size
    for _ in 0..SCALE_REPEATS {
        for (_, g, sets, ws, best) in cases.iter_mut() {
            let start = Instant::now();
            for s in sets.iter() {
                std::hint::black_box(estimate_influence_with(g, s, model, ws)?);
            }
            *best = best.min(start.elapsed().as_secs_f64());
        }
    }
    let rows = cases
        .into_iter()
        .map(|(l, g, _, _, seconds)| ScaleRow {
            log2_edges: l,
            nodes: g.node_count(),
            edges: g.edge_count(),
            estimations,
            seconds,
            seconds_per_stack: seconds / (estimations * model.hyper.stacks) as f64,
        })
        .collect();
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hyper;

    fn graph() -> DirectedGraph {
        assign_weighted_cascade(&generate_rmat(9, RmatParams::default(), 5).unwrap()).unwrap()
    }

    #[test]
    fn identical_estimators_correlate_perfectly() {
        let g = graph();
        let mc = Backend::MonteCarlo { runs: 100, seed: 3 };
        let ev = compare_estimators(&g, &mc, &mc, 30, 1).unwrap();
        assert!((ev.report.pearson - 1.0).abs() < 1e-12);
        assert!((ev.report.spearman - 1.0).abs() < 1e-12);
        assert_eq!(ev.report.n, 30);
    }

    #[test]
    fn ie_eval_is_reproducible() {
        let g = graph();
        let model = ModelParams::init(Hyper::new(3, 2, 4, 2, 0.3), 1).unwrap();
        let a = run_ie_eval(&g, &model, 20, 200, 9).unwrap();
        let b = run_ie_eval(&g, &model, 20, 200, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.iter().all(|s| s.estimate >= s.seed_count as f64 - 1e-9));
    }

    #[test]
    fn tiny_scale_run() {
        let model = ModelParams::init(Hyper::default(), 1).unwrap();
        let rows = run_scalability(&[4, 5], 2, &model, 3).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].seconds < 1.0);
        assert!(run_scalability(&[SCALE_LOG2_CAP + 1], 1, &model, 3).is_err());
    }
}
