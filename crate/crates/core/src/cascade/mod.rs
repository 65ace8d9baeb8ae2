//! Independent Cascade diffusion: Monte Carlo simulation, the exact
//! live-edge oracle, and supervised tuple generation for the surrogate.

mod exact;
mod simulate;
mod tuples;

pub use exact::{exact_influence, exact_set_influence, ExactResult, MAX_EXACT_EDGES};
pub use simulate::{simulate, simulate_influence, SimulationResult};
pub use tuples::{generate_tuples, generate_tuples_from, read_tuples, sample_seed_set, seed_size_cap, write_tuples, TrainingTuple, TUPLE_MAGIC};
