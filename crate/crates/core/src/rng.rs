//! Seed derivation and counter-based coins.
//!
//! Every random decision in a Monte Carlo run is a pure function of
//! `(master_seed, run_index, edge_index)`, so results do not depend on how
//! runs are scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent child seed from a parent seed and an index.
#[inline]
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// A seeded general-purpose generator for a derived stream.
pub fn stream_rng(parent: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parent, index))
}

/// Key of the coin stream for one Monte Carlo run.
#[inline]
pub fn run_key(master_seed: u64, run: u64) -> u64 {
    derive_seed(master_seed, run)
}

/// Uniform draw in `[0, 1)` at position `edge` of the run's coin stream.
#[inline]
pub fn coin(run_key: u64, edge: u64) -> f64 {
    let bits = mix64(run_key ^ edge.wrapping_mul(GOLDEN).wrapping_add(GOLDEN));
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
