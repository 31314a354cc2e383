//! Seed derivation.
//!
//! Every scene index gets its own seed, computed from the master seed with the
//! SplitMix64 finalizer:
//!
//! ```text
//! scene_seed(master, i) = mix(mix(master) ^ mix(i + 0x9E3779B97F4A7C15))
//! mix(z) = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!          z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31
//! ```
//!
//! Scenes can therefore be generated in any order, or in parallel, with
//! identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn scene_seed(master_seed: u64, scene_index: u64) -> u64 {
    mix64(mix64(master_seed) ^ mix64(scene_index.wrapping_add(GOLDEN)))
}

/// Derive an independent stream seed for a named purpose.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_mul(GOLDEN).wrapping_add(1)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
