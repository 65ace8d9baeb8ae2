//! Influence estimation and maximization under the Independent Cascade model.
//!
//! The crate provides Monte Carlo and exact influence estimators, a stacked
//! graph-convolution surrogate that predicts per-step infection
//! probabilities, and greedy seed selection over any influence backend.

pub mod cascade;
mod error;
pub mod eval;
pub mod graph;
pub mod im;
pub mod model;
pub mod probs;
pub mod rng;

pub use error::{Error, Result};
pub use graph::{DirectedGraph, InfectionVector, NodeId, SeedSet};
