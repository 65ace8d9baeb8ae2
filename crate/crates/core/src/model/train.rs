use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::forward::{backward, forward_trace, loss, loss_and_grad};
use super::inference::stacked_inference;
use super::params::{Hyper, ModelParams};
use crate::cascade::{sample_seed_set, seed_size_cap, simulate_influence, TrainingTuple};
use crate::eval::stats::pearson;
use crate::graph::DirectedGraph;
use crate::rng::{derive_seed, stream_rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// Plain mini-batch gradient descent.
    Sgd,
    /// Adam with `beta1 = 0.9`, `beta2 = 0.999`, driven by the same step-size schedule.
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::InvalidParameter(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub hyper: Hyper,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of tuples held out for checkpoint and stack selection.
    pub val_frac: f64,
    pub optimizer: Optimizer,
    /// Stack counts tried on validation seed sets; empty keeps `hyper.stacks`.
    pub stack_candidates: Vec<usize>,
    pub val_seed_sets: usize,
    pub val_runs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hyper: Hyper::default(),
            epochs: 100,
            batch_size: 16,
            seed: 7,
            val_frac: 0.2,
            optimizer: Optimizer::Adam,
            stack_candidates: (1..=8).collect(),
            val_seed_sets: 50,
            val_runs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean of the mini-batch losses seen during the epoch.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best checkpoint by validation loss, with `hyper.stacks` set to the selected `s`.
    pub params: ModelParams,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    /// Validation Pearson for each candidate `s`; NaN where it is undefined.
    pub stack_scores: Vec<(usize, f64)>,
}

/// `1e-4 * t` for the first ten epochs, `1e-2 / t` afterwards (`t` is 1-indexed).
pub fn learning_rate(epoch: usize) -> f64 {
    let t = epoch as f64;
    if epoch <= 10 {
        1e-4 * t
    } else {
        1e-2 / t
    }
}

fn check_tuples<'a>(
    tuples: &[TrainingTuple],
    graphs: &'a HashMap<String, DirectedGraph>,
    e: usize,
) -> Result<Vec<&'a DirectedGraph>> {
    if tuples.is_empty() {
        return Err(Error::InvalidParameter("no training tuples".into()));
    }
    tuples
        .iter()
        .map(|t| {
            let g = graphs
                .get(&t.graph_ref)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown graph {:?}", t.graph_ref)))?;
            if t.history.len() != e {
                return Err(Error::LengthMismatch {
                    expected: e,
                    actual: t.history.len(),
                });
            }
            g.check_len(t.target.len())?;
            Ok(g)
        })
        .collect()
}

/// Loss of one tuple and its gradient with respect to all parameters.
pub(crate) fn tuple_loss_grad(
    g: &DirectedGraph,
    tuple: &TrainingTuple,
    params: &ModelParams,
) -> Result<(f64, ModelParams)> {
    let trace = forward_trace(g, &tuple.history, params)?;
    let (value, d_out) = loss_and_grad(trace.output(), &tuple.target, params.hyper.lambda)?;
    let grads = backward(&trace, g, params, &d_out)?;
    Ok((value, grads))
}

fn tuple_loss(g: &DirectedGraph, tuple: &TrainingTuple, params: &ModelParams) -> Result<f64> {
    let trace = forward_trace(g, &tuple.history, params)?;
    loss(trace.output(), &tuple.target, params.hyper.lambda)
}

/// Mean loss over the given tuples; summed in index order so the value is schedule-independent.
pub fn evaluate_loss(
    tuples: &[TrainingTuple],
    graphs: &HashMap<String, DirectedGraph>,
    params: &ModelParams,
) -> Result<f64> {
    let gs = check_tuples(tuples, graphs, params.hyper.history)?;
    let all: Vec<usize> = (0..tuples.len()).collect();
    mean_loss(tuples, &gs, &all, params)
}

fn mean_loss(tuples: &[TrainingTuple], gs: &[&DirectedGraph], idx: &[usize], params: &ModelParams) -> Result<f64> {
    let losses = idx
        .par_iter()
        .map(|&i| tuple_loss(gs[i], &tuples[i], params))
        .collect::<Result<Vec<f64>>>()?;
    let mean = losses.iter().sum::<f64>() / idx.len() as f64;
    if !mean.is_finite() {
        return Err(Error::NonFinite(format!("loss {mean}")));
    }
    Ok(mean)
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

fn apply_update(params: &mut ModelParams, grad: &[f64], lr: f64, optimizer: Optimizer, adam: &mut AdamState) {
    match optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.values_mut().zip(grad) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam => {
            const B1: f64 = 0.9;
            const B2: f64 = 0.999;
            const EPS: f64 = 1e-8;
            adam.step += 1;
            let c1 = 1.0 - B1.powi(adam.step);
            let c2 = 1.0 - B2.powi(adam.step);
            for (((p, g), m), v) in params.values_mut().zip(grad).zip(&mut adam.m).zip(&mut adam.v) {
                *m = B1 * *m + (1.0 - B1) * g;
                *v = B2 * *v + (1.0 - B2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
            }
        }
    }
}

/// Mini-batch training with a held-out split for checkpoint and stack selection.
///
/// Per-tuple gradients are computed in parallel and summed in batch order,
/// so the result depends only on the inputs and `config.seed`.
pub fn train(
    tuples: &[TrainingTuple],
    graphs: &HashMap<String, DirectedGraph>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.hyper.validate()?;
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::InvalidParameter("epochs and batch size must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&config.val_frac) {
        return Err(Error::InvalidParameter(format!("val_frac must be in [0, 1), got {}", config.val_frac)));
    }
    if config.stack_candidates.contains(&0) {
        return Err(Error::InvalidParameter("stack candidates must be >= 1".into()));
    }
    let gs = check_tuples(tuples, graphs, config.hyper.history)?;

    let mut order: Vec<usize> = (0..tuples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0)));
    let n_val = if tuples.len() < 2 {
        0
    } else {
        ((config.val_frac * tuples.len() as f64).round() as usize).min(tuples.len() - 1)
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let val_idx = val_idx.to_vec();

    let mut params = ModelParams::init(config.hyper.clone(), derive_seed(config.seed, 1))?;
    let mut adam = AdamState {
        m: vec![0.0; params.param_count()],
        v: vec![0.0; params.param_count()],
        step: 0,
    };
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let lr = learning_rate(epoch);
        train_idx.shuffle(&mut stream_rng(config.seed, 1 + epoch as u64));
        let mut loss_sum = 0.0;
        for batch in train_idx.chunks(config.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| tuple_loss_grad(gs[i], &tuples[i], &params))
                .collect::<Result<Vec<_>>>()?;
            let mut grad = params.zeros_like();
            for (value, g) in &results {
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!("training loss {value} at epoch {epoch}")));
                }
                loss_sum += value;
                grad.add_assign(g);
            }
            grad.scale(1.0 / batch.len() as f64);
            let flat = grad.to_flat();
            if let Some(bad) = flat.iter().find(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient {bad} at epoch {epoch}")));
            }
            apply_update(&mut params, &flat, lr, config.optimizer, &mut adam);
        }
        let train_loss = loss_sum / train_idx.len() as f64;
        let val_loss = if val_idx.is_empty() {
            mean_loss(tuples, &gs, &train_idx, &params)?
        } else {
            mean_loss(tuples, &gs, &val_idx, &params)?
        };
        if val_loss < best_loss {
            best_loss = val_loss;
            best = params.clone();
            best_epoch = epoch;
        }
        history.push(EpochStats {
            epoch,
            learning_rate: lr,
            train_loss,
            val_loss,
        });
    }

    let stack_scores = select_stacks(tuples, graphs, &val_idx, &mut best, config)?;
    Ok(TrainOutcome {
        params: best,
        epochs: history,
        best_epoch,
        stack_scores,
    })
}

/// Score each candidate `s` by Pearson correlation against Monte Carlo on fresh
/// seed sets drawn on the validation graphs, and keep the best (smallest on ties).
fn select_stacks(
    tuples: &[TrainingTuple],
    graphs: &HashMap<String, DirectedGraph>,
    val_idx: &[usize],
    params: &mut ModelParams,
    config: &TrainConfig,
) -> Result<Vec<(usize, f64)>> {
    if config.stack_candidates.is_empty() || config.val_seed_sets < 2 || config.val_runs == 0 {
        return Ok(Vec::new());
    }
    let pool: &[usize] = if val_idx.is_empty() {
        &[]
    } else {
        val_idx
    };
    let refs: BTreeSet<&str> = if pool.is_empty() {
        tuples.iter().map(|t| t.graph_ref.as_str()).collect()
    } else {
        pool.iter().map(|&i| tuples[i].graph_ref.as_str()).collect()
    };
    let refs: Vec<&DirectedGraph> = refs.into_iter().map(|r| &graphs[r]).collect();
    let max_s = *config.stack_candidates.iter().max().expect("nonempty");
    let mut probe = params.clone();
    probe.hyper.stacks = max_s;

    let rows = (0..config.val_seed_sets)
        .into_par_iter()
        .map(|j| {
            let g = refs[j % refs.len()];
            let n = g.node_count();
            let mut rng = stream_rng(config.seed, (1 << 32) + 2 * j as u64);
            let seeds = sample_seed_set(&mut rng, n, seed_size_cap(n));
            let truth = simulate_influence(g, seeds.nodes(), config.val_runs, stream_seed(config.seed, j));
            let est = stacked_inference(g, &seeds, &probe)?;
            Ok((truth, est.vectors.iter().map(|v| v.total()).collect::<Vec<f64>>()))
        })
        .collect::<Result<Vec<(f64, Vec<f64>)>>>()?;
    let truth: Vec<f64> = rows.iter().map(|r| r.0).collect();

    let mut scores = Vec::with_capacity(config.stack_candidates.len());
    let mut best: Option<(usize, f64)> = None;
    for &s in &config.stack_candidates {
        let est: Vec<f64> = rows.iter().map(|r| r.1[s]).collect();
        let score = pearson(&truth, &est).unwrap_or(f64::NAN);
        scores.push((s, score));
        if score.is_finite() && best.is_none_or(|(bs, b)| score > b || (score == b && s < bs)) {
            best = Some((s, score));
        }
    }
    if let Some((s, _)) = best {
        params.hyper.stacks = s;
    }
    Ok(scores)
}

fn stream_seed(master: u64, j: usize) -> u64 {
    derive_seed(master, (1 << 32) + 2 * j as u64 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::generate_tuples;
    use crate::graph::InfectionVector;
    use rand::Rng;

    fn iv(v: &[f64]) -> InfectionVector {
        InfectionVector::new(v.to_vec()).unwrap()
    }

    fn fixture_graph() -> DirectedGraph {
        let edges = [
            (0, 1, 0.6),
            (0, 2, 0.4),
            (1, 3, 0.5),
            (2, 3, 0.7),
            (3, 4, 0.8),
            (4, 5, 0.3),
            (2, 5, 0.2),
            (5, 6, 0.9),
            (6, 7, 0.5),
            (1, 7, 0.3),
            (7, 0, 0.2),
        ];
        DirectedGraph::from_edges(8, &edges).unwrap()
    }

    fn graphs(g: DirectedGraph) -> HashMap<String, DirectedGraph> {
        HashMap::from([("g".to_string(), g)])
    }

    fn quick_config(e: usize) -> TrainConfig {
        TrainConfig {
            hyper: Hyper::new(e, 2, 6, 3, 0.3),
            epochs: 15,
            batch_size: 8,
            seed: 11,
            val_frac: 0.2,
            optimizer: Optimizer::Adam,
            stack_candidates: vec![1, 2, 3],
            val_seed_sets: 10,
            val_runs: 200,
        }
    }

    #[test]
    fn schedule() {
        assert_eq!(learning_rate(1), 1e-4);
        assert!((learning_rate(10) - 1e-3).abs() < 1e-18);
        assert_eq!(learning_rate(11), 1e-2 / 11.0);
        assert_eq!(learning_rate(100), 1e-4);
    }

    #[test]
    fn converged_tuple_has_zero_loss() {
        let g = fixture_graph();
        let pi = iv(&[1.0, 0.6, 0.4, 0.5, 0.0, 0.0, 0.0, 0.0]);
        let tuple = TrainingTuple {
            step: 3,
            target: pi.clone(),
            history: vec![pi.clone(), pi.clone(), pi],
            graph_ref: "g".into(),
        };
        let mut cfg = quick_config(3);
        cfg.epochs = 2;
        cfg.stack_candidates.clear();
        let out = train(&[tuple], &graphs(g), &cfg).unwrap();
        assert!(out.epochs.iter().all(|s| s.train_loss == 0.0 && s.val_loss == 0.0));
    }

    #[test]
    fn training_reduces_loss() {
        let g = fixture_graph();
        let tuples = generate_tuples(&g, "g", 100, 2, 500, 5).unwrap();
        assert_eq!(tuples.len(), 100);
        let gm = graphs(g);
        let cfg = quick_config(2);
        let initial = ModelParams::init(cfg.hyper.clone(), derive_seed(cfg.seed, 1)).unwrap();
        let before = evaluate_loss(&tuples, &gm, &initial).unwrap();
        let out = train(&tuples, &gm, &cfg).unwrap();
        let after = evaluate_loss(&tuples, &gm, &out.params).unwrap();
        assert!(after < before, "{after} >= {before}");
        assert_eq!(out.stack_scores.len(), 3);
        assert!(cfg.stack_candidates.contains(&out.params.hyper.stacks));
    }

    #[test]
    fn sgd_also_reduces_loss() {
        let g = fixture_graph();
        let tuples = generate_tuples(&g, "g", 100, 2, 500, 5).unwrap();
        let gm = graphs(g);
        let mut cfg = quick_config(2);
        cfg.optimizer = Optimizer::Sgd;
        cfg.stack_candidates.clear();
        let initial = ModelParams::init(cfg.hyper.clone(), derive_seed(cfg.seed, 1)).unwrap();
        let before = evaluate_loss(&tuples, &gm, &initial).unwrap();
        let out = train(&tuples, &gm, &cfg).unwrap();
        assert!(evaluate_loss(&tuples, &gm, &out.params).unwrap() <= before);
    }

    #[test]
    fn deterministic() {
        let g = fixture_graph();
        let tuples = generate_tuples(&g, "g", 40, 2, 200, 9).unwrap();
        let gm = graphs(g);
        let cfg = quick_config(2);
        let a = train(&tuples, &gm, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| train(&tuples, &gm, &cfg)).unwrap();
        assert_eq!(a.params.to_flat(), b.params.to_flat());
        assert_eq!(a.params.hyper, b.params.hyper);
        assert_eq!(a.epochs, b.epochs);
    }

    #[test]
    fn errors() {
        let gm = graphs(fixture_graph());
        assert!(train(&[], &gm, &quick_config(2)).is_err());
        let pi = iv(&[1.0; 8]);
        let t = TrainingTuple {
            step: 2,
            target: pi.clone(),
            history: vec![pi.clone(), pi],
            graph_ref: "missing".into(),
        };
        assert!(train(&[t], &gm, &quick_config(2)).is_err());
    }

    fn random_history(rng: &mut ChaCha8Rng, n: usize, e: usize) -> (Vec<InfectionVector>, InfectionVector) {
        // cumulative, monotone vectors oldest to newest
        let mut cur: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect();
        let mut seq = vec![cur.clone()];
        for _ in 0..e {
            for x in cur.iter_mut() {
                *x = (*x + rng.random_range(0.0..0.3)).min(1.0);
            }
            seq.push(cur.clone());
        }
        let target = iv(&seq.pop().unwrap());
        let history = seq.into_iter().rev().map(|v| iv(&v)).collect();
        (history, target)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = fixture_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let h = 1e-5;
        let mut checked = 0;
        let mut attempt = 0;
        while checked < 10 {
            attempt += 1;
            assert!(attempt < 500, "too many instances near kinks");
            let (history, target) = random_history(&mut rng, 8, 3);
            let params = ModelParams::init(Hyper::new(3, 3, 5, 1, 0.3), rng.random()).unwrap();
            let tuple = TrainingTuple {
                step: 3,
                target: target.clone(),
                history,
                graph_ref: "g".into(),
            };
            let trace = forward_trace(&g, &tuple.history, &params).unwrap();
            // nodes whose output moves with the parameters
            let active = |v: usize| trace.raw()[v] > 0.0 && tuple.history[0][v] + trace.raw()[v] < trace.upper()[v];
            let diffs: Vec<f64> = (0..8)
                .filter(|&v| active(v))
                .map(|v| (trace.output()[v] - target[v]).abs())
                .collect();
            let sum_gap = (trace.output().total() - target.total()).abs();
            let margin = trace.kink_margin().min(diffs.iter().cloned().fold(f64::INFINITY, f64::min)).min(sum_gap);
            if margin < 1e-3 {
                continue;
            }
            let (_, grads) = tuple_loss_grad(&g, &tuple, &params).unwrap();
            let analytic = grads.to_flat();
            let base = params.to_flat();
            let mut probe = params.clone();
            for k in 0..base.len() {
                let mut up = base.clone();
                up[k] += h;
                probe.set_flat(&up).unwrap();
                let lu = tuple_loss(&g, &tuple, &probe).unwrap();
                up[k] -= 2.0 * h;
                probe.set_flat(&up).unwrap();
                let ld = tuple_loss(&g, &tuple, &probe).unwrap();
                let numeric = (lu - ld) / (2.0 * h);
                let a = analytic[k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel <= 1e-4 || (a - numeric).abs() < 1e-10, "param {k}: {a} vs {numeric}");
            }
            checked += 1;
        }
    }
}
