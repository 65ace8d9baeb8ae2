use super::forward::{forward_step_with, StepWorkspace};
use super::params::ModelParams;
use crate::graph::{DirectedGraph, InfectionVector, NodeId, SeedSet};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct StackedEstimate {
    /// `pi_0` followed by one estimate per stacked application.
    pub vectors: Vec<InfectionVector>,
    pub influence: f64,
}

/// Estimate `pi_s` from the seed indicator by applying the step network `s` times.
///
/// Steps before 0 are treated as all-zero vectors (nothing is infected before
/// the seeds), so the first application sees the seeds as newly infected and
/// is bounded by `pi_0 + pi_0 P`.
pub fn stacked_inference(g: &DirectedGraph, seeds: &SeedSet, params: &ModelParams) -> Result<StackedEstimate> {
    let pi0 = InfectionVector::indicator(g.node_count(), seeds);
    let mut vectors = vec![pi0.clone()];
    run_stacks(g, pi0, params, &mut StepWorkspace::default(), |v| vectors.push(v.clone()))?;
    let influence = vectors.last().map(InfectionVector::total).unwrap_or(0.0);
    Ok(StackedEstimate { vectors, influence })
}

/// `<1, pi_s>` without keeping the intermediate vectors.
pub fn estimate_influence(g: &DirectedGraph, seeds: &SeedSet, params: &ModelParams) -> Result<f64> {
    estimate_influence_with(g, seeds, params, &mut StepWorkspace::default())
}

/// [`estimate_influence`] reusing scratch space across calls.
pub fn estimate_influence_with(
    g: &DirectedGraph,
    seeds: &SeedSet,
    params: &ModelParams,
    ws: &mut StepWorkspace,
) -> Result<f64> {
    let pi0 = InfectionVector::indicator(g.node_count(), seeds);
    let mut influence = pi0.total();
    run_stacks(g, pi0, params, ws, |v| influence = v.total())?;
    Ok(influence)
}

fn run_stacks(
    g: &DirectedGraph,
    pi0: InfectionVector,
    params: &ModelParams,
    ws: &mut StepWorkspace,
    mut visit: impl FnMut(&InfectionVector),
) -> Result<()> {
    let n = g.node_count();
    let e = params.hyper.history;
    let mut history: Vec<InfectionVector> = std::iter::once(pi0)
        .chain(std::iter::repeat_n(InfectionVector::zeros(n), e - 1))
        .collect();
    for _ in 0..params.hyper.stacks {
        let next = forward_step_with(g, &history, params, ws)?;
        visit(&next);
        history.pop();
        history.insert(0, next);
    }
    Ok(())
}

/// `<1, pi_s>` for a possibly empty seed list (`f(empty) = 0`).
pub fn surrogate_influence(g: &DirectedGraph, seeds: &[NodeId], params: &ModelParams) -> Result<f64> {
    if seeds.is_empty() {
        return Ok(0.0);
    }
    let seeds = SeedSet::new(seeds.to_vec(), g.node_count())?;
    estimate_influence(g, &seeds, params)
}
