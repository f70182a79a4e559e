//! Seeded randomness with documented child-stream derivation.
//!
//! Every stochastic operation in the crate draws from a `ChaCha8Rng` seeded
//! through [`child_seed`]. A child stream is derived from the experiment seed,
//! a purpose tag, and an index as
//!
//! ```text
//! child = splitmix64(base ^ fnv1a64(tag) ^ splitmix64(index))
//! ```
//!
//! so that independent runs (different seeds), different purposes (split,
//! partition, model init, ...), and different indices (per-seed repetitions)
//! all get decorrelated, reproducible streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn child_seed(base: u64, tag: &str, index: u64) -> u64 {
    splitmix64(base ^ fnv1a64(tag.as_bytes()) ^ splitmix64(index))
}

pub fn child_rng(base: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(base, tag, index))
}

/// Uniform draw in [-r, r).
pub fn uniform_symmetric(rng: &mut ChaCha8Rng, r: f64) -> f64 {
    use rand::Rng;
    (2.0 * rng.gen::<f64>() - 1.0) * r
}
