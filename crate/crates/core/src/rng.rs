//! Seeded random streams.
//!
//! Every stochastic component takes a [`SimRng`] by mutable reference. Seeds
//! for independent sub-streams (train/validation/test splits, ensemble
//! members, restarts) are derived with [`derive_seed`] so that a single user
//! seed fans out deterministically.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Platform-stable 64-bit seeded generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer applied to `seed ^ golden·(stream+1)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
