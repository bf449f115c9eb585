//! Deterministic random streams.
//!
//! Every consumer of randomness derives its own ChaCha8 stream from a root
//! seed and a path of integers (tree index, node id, draw index, ...), so the
//! values a consumer sees never depend on the order in which other consumers
//! ran.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// splitmix64 finalizer.
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a seed with one path component.
pub fn mix(seed: u64, component: u64) -> u64 {
    finalize(finalize(seed.wrapping_add(0x9e37_79b9_7f4a_7c15)) ^ component)
}

pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(finalize(root), |acc, &c| mix(acc, c))
}

pub fn stream(root: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}
