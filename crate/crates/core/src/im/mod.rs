//! Seed selection by greedy maximization over a pluggable influence function.

mod function;
mod greedy;

pub use function::{Backend, Counting, InfluenceFunction};
pub use greedy::{greedy_select, lazy_greedy_select, maximize_with_surrogate, Selection, GAIN_RESOLUTION};
