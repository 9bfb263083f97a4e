//! Deterministic seed derivation.
//!
//! Every random decision in the toolkit draws from a `ChaCha8Rng` whose
//! 64-bit seed is derived from a base seed plus a path of context words
//! (run index, strategy, week, purpose tag, ...). The mixing function is
//! fixed, so outputs are identical across platforms, thread counts, and
//! scheduling orders.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step: advance by the 64-bit golden ratio, then avalanche.
fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a path of context words.
///
/// Distinct paths give statistically independent seeds; equal paths give
/// equal seeds.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &word in path {
        state = splitmix64(state ^ word);
    }
    state
}

/// A `ChaCha8Rng` seeded by [`derive_seed`].
pub fn rng(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}
