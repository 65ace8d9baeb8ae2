use rayon::prelude::*;

use crate::graph::{DirectedGraph, InfectionVector, NodeId, SeedSet};
use crate::rng::{coin, run_key};
use crate::Result;

const RUNS_PER_CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// `pi_0 ..= pi_h`; `pi_h` is the converged vector.
    pub per_step: Vec<InfectionVector>,
    /// Mean number of infected nodes per run.
    pub influence: f64,
    /// Standard error of `influence`.
    pub std_error: f64,
    pub runs: usize,
}

impl SimulationResult {
    pub fn final_vector(&self) -> &InfectionVector {
        self.per_step.last().expect("at least pi_0")
    }
}

/// Per-step counts of first infections, plus per-run size moments.
#[derive(Default)]
struct Tally {
    new_at_step: Vec<Vec<u32>>,
    total: u64,
    total_sq: u64,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        if other.new_at_step.len() > self.new_at_step.len() {
            return other.merge(self);
        }
        for (mine, theirs) in self.new_at_step.iter_mut().zip(other.new_at_step) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
        self.total += other.total;
        self.total_sq += other.total_sq;
        self
    }
}

fn run_chunk(g: &DirectedGraph, seeds: &SeedSet, master_seed: u64, runs: std::ops::Range<usize>) -> Tally {
    let n = g.node_count();
    let mut tally = Tally::default();
    let mut stamp = vec![u32::MAX; n];
    let mut frontier: Vec<NodeId> = Vec::new();
    let mut next: Vec<NodeId> = Vec::new();
    for (local, run) in runs.enumerate() {
        let key = run_key(master_seed, run as u64);
        let mark = local as u32;
        frontier.clear();
        frontier.extend_from_slice(seeds.nodes());
        for &s in seeds.nodes() {
            stamp[s as usize] = mark;
        }
        let mut infected = seeds.len() as u64;
        let mut step = 0;
        while !frontier.is_empty() {
            step += 1;
            next.clear();
            for &u in &frontier {
                for (v, p, e) in g.out_edges(u) {
                    if stamp[v as usize] != mark && coin(key, e as u64) < p {
                        stamp[v as usize] = mark;
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            if tally.new_at_step.len() <= step {
                tally.new_at_step.resize_with(step + 1, || vec![0; n]);
            }
            for &v in &next {
                tally.new_at_step[step][v as usize] += 1;
            }
            infected += next.len() as u64;
            std::mem::swap(&mut frontier, &mut next);
        }
        tally.total += infected;
        tally.total_sq += infected * infected;
    }
    tally
}

/// Estimate per-step infection probabilities with `runs` independent cascades.
///
/// Run `r` draws the coin for edge `e` at position `e` of a stream keyed by
/// `(master_seed, r)`, so the result is identical under any thread count.
pub fn simulate(g: &DirectedGraph, seeds: &SeedSet, runs: usize, master_seed: u64) -> Result<SimulationResult> {
    if runs == 0 {
        return Err(crate::Error::InvalidParameter("runs must be at least 1".into()));
    }
    if let Some(&last) = seeds.nodes().last() {
        if last as usize >= g.node_count() {
            return Err(crate::Error::NodeOutOfRange {
                id: last as usize,
                node_count: g.node_count(),
            });
        }
    }
    let chunks = runs.div_ceil(RUNS_PER_CHUNK);
    let tally = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * RUNS_PER_CHUNK;
            run_chunk(g, seeds, master_seed, lo..(lo + RUNS_PER_CHUNK).min(runs))
        })
        .reduce(Tally::default, Tally::merge);

    let n = g.node_count();
    let r = runs as f64;
    let mut cumulative = vec![0u64; n];
    for &s in seeds.nodes() {
        cumulative[s as usize] = runs as u64;
    }
    let to_vector = |c: &[u64]| InfectionVector::from_vec_unchecked(c.iter().map(|&x| x as f64 / r).collect());
    let mut per_step = vec![to_vector(&cumulative)];
    for counts in tally.new_at_step.iter().skip(1) {
        for (acc, &c) in cumulative.iter_mut().zip(counts) {
            *acc += c as u64;
        }
        per_step.push(to_vector(&cumulative));
    }

    let influence = tally.total as f64 / r;
    let std_error = if runs > 1 {
        let mean_sq = tally.total_sq as f64 / r;
        let var = (mean_sq - influence * influence) * r / (r - 1.0);
        (var.max(0.0) / r).sqrt()
    } else {
        0.0
    };
    Ok(SimulationResult {
        per_step,
        influence,
        std_error,
        runs,
    })
}

/// Influence only, without materializing per-step vectors.
pub fn simulate_influence(g: &DirectedGraph, seeds: &[NodeId], runs: usize, master_seed: u64) -> f64 {
    if seeds.is_empty() {
        return 0.0;
    }
    let seeds = SeedSet::new(seeds.to_vec(), g.node_count()).expect("valid seeds");
    let chunks = runs.div_ceil(RUNS_PER_CHUNK);
    let total: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * RUNS_PER_CHUNK;
            count_chunk(g, &seeds, master_seed, lo..(lo + RUNS_PER_CHUNK).min(runs))
        })
        .sum();
    total as f64 / runs as f64
}

fn count_chunk(g: &DirectedGraph, seeds: &SeedSet, master_seed: u64, runs: std::ops::Range<usize>) -> u64 {
    let mut stamp = vec![u32::MAX; g.node_count()];
    let mut stack: Vec<NodeId> = Vec::new();
    let mut total = 0;
    for (local, run) in runs.enumerate() {
        let key = run_key(master_seed, run as u64);
        let mark = local as u32;
        stack.clear();
        for &s in seeds.nodes() {
            stamp[s as usize] = mark;
            stack.push(s);
        }
        total += seeds.len() as u64;
        // Reachability over live edges; visiting order does not change the reached set.
        while let Some(u) = stack.pop() {
            for (v, p, e) in g.out_edges(u) {
                if stamp[v as usize] != mark && coin(key, e as u64) < p {
                    stamp[v as usize] = mark;
                    stack.push(v);
                    total += 1;
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeds(ids: &[NodeId], n: usize) -> SeedSet {
        SeedSet::new(ids.to_vec(), n).unwrap()
    }

    #[test]
    fn single_node() {
        let g = DirectedGraph::from_edges(1, &[]).unwrap();
        let r = simulate(&g, &seeds(&[0], 1), 100, 1).unwrap();
        assert_eq!(r.per_step.len(), 1);
        assert_eq!(r.per_step[0].as_slice(), &[1.0]);
        assert_eq!(r.influence, 1.0);
        assert_eq!(r.std_error, 0.0);
    }

    #[test]
    fn path_influence() {
        let g = DirectedGraph::from_edges(3, &[(0, 1, 0.5), (1, 2, 0.5)]).unwrap();
        let r = simulate(&g, &seeds(&[0], 3), 100_000, 7).unwrap();
        assert!((r.influence - 1.75).abs() <= 3.0 * r.std_error, "{} ± {}", r.influence, r.std_error);
        assert_eq!(r.per_step.len(), 3);
        let total: f64 = r.final_vector().total();
        assert!((total - r.influence).abs() < 1e-9);
    }

    #[test]
    fn diamond_influence() {
        let g = DirectedGraph::from_edges(4, &[(0, 1, 0.5), (0, 2, 0.5), (1, 3, 0.5), (2, 3, 0.5)]).unwrap();
        let r = simulate(&g, &seeds(&[0], 4), 100_000, 11).unwrap();
        assert!((r.influence - 2.4375).abs() <= 3.0 * r.std_error);
    }

    #[test]
    fn monotone_and_seeded_steps() {
        let g = crate::graph::generate_rmat(9, Default::default(), 4).unwrap();
        let g = crate::graph::assign_weighted_cascade(&g).unwrap();
        let s = seeds(&[0, 3, 17], g.node_count());
        let r = simulate(&g, &s, 2000, 5).unwrap();
        for w in r.per_step.windows(2) {
            assert!(w[0].iter().zip(w[1].iter()).all(|(a, b)| a <= b));
            assert_ne!(w[0], w[1]);
        }
        for v in &r.per_step {
            assert!(s.nodes().iter().all(|&x| v[x as usize] == 1.0));
        }
        assert_eq!(simulate_influence(&g, s.nodes(), 2000, 5), r.influence);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let g = crate::graph::generate_rmat(10, Default::default(), 1).unwrap();
        let g = crate::graph::assign_weighted_cascade(&g).unwrap();
        let s = seeds(&[1, 2], g.node_count());
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate(&g, &s, 1000, 3).unwrap());
        let b = four.install(|| simulate(&g, &s, 1000, 3).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_zero_runs() {
        let g = DirectedGraph::from_edges(2, &[(0, 1, 0.5)]).unwrap();
        assert!(simulate(&g, &seeds(&[0], 2), 0, 0).is_err());
    }
}
