use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::cascade::{exact_set_influence, simulate_influence};
use crate::graph::{DirectedGraph, NodeId};
use crate::model::{surrogate_influence, ModelParams};
use crate::{Error, Result};

/// Set function `f(S)` on a graph. Implementations must be deterministic,
/// independent of the order of `seeds`, and return 0 for the empty set.
pub trait InfluenceFunction: Sync {
    fn influence(&self, g: &DirectedGraph, seeds: &[NodeId]) -> Result<f64>;
}

impl<T: InfluenceFunction + ?Sized> InfluenceFunction for &T {
    fn influence(&self, g: &DirectedGraph, seeds: &[NodeId]) -> Result<f64> {
        (**self).influence(g, seeds)
    }
}

#[derive(Debug, Clone)]
pub enum Backend {
    /// Mean cascade size over `runs` simulations with a fixed master seed.
    MonteCarlo { runs: usize, seed: u64 },
    /// `<1, pi_s>` from the stacked step network.
    Surrogate(ModelParams),
    /// Live-edge enumeration; small graphs only.
    Exact,
}

impl InfluenceFunction for Backend {
    fn influence(&self, g: &DirectedGraph, seeds: &[NodeId]) -> Result<f64> {
        if let Some(&bad) = seeds.iter().find(|&&s| s as usize >= g.node_count()) {
            return Err(Error::NodeOutOfRange {
                id: bad as usize,
                node_count: g.node_count(),
            });
        }
        match self {
            Backend::MonteCarlo { runs, seed } => {
                if *runs == 0 {
                    return Err(Error::InvalidParameter("runs must be >= 1".into()));
                }
                Ok(simulate_influence(g, seeds, *runs, *seed))
            }
            Backend::Surrogate(params) => surrogate_influence(g, seeds, params),
            Backend::Exact => exact_set_influence(g, seeds),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::MonteCarlo { runs, seed } => write!(f, "mc(runs={runs},seed={seed})"),
            Backend::Surrogate(p) => write!(
                f,
                "surrogate(e={},layers={},s={})",
                p.hyper.history,
                p.hyper.layers(),
                p.hyper.stacks
            ),
            Backend::Exact => write!(f, "exact"),
        }
    }
}

/// Wraps an influence function and counts how often it is called.
pub struct Counting<F> {
    inner: F,
    calls: AtomicUsize,
}

impl<F: InfluenceFunction> Counting<F> {
    pub fn new(inner: F) -> Self {
        Counting {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> F {
        self.inner
    }
}

impl<F: InfluenceFunction> InfluenceFunction for Counting<F> {
    fn influence(&self, g: &DirectedGraph, seeds: &[NodeId]) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.influence(g, seeds)
    }
}
