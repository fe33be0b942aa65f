//! Deterministic seed derivation.
//!
//! Every randomized stage draws from its own stream derived from the run
//! seed plus a path of tags (iteration, view index, stage id), so changing
//! one knob (e.g. the number of iterations) does not perturb the streams
//! of earlier stages.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage tags used when deriving per-stage seeds.
pub mod stage {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const VIEW: u64 = 4;
    pub const STRONG: u64 = 5;
    pub const FINAL: u64 = 6;
    pub const NAIVE: u64 = 7;
    pub const HOLDOUT: u64 = 8;
    pub const INIT: u64 = 9;
    pub const SHUFFLE: u64 = 10;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mix a base seed with a path of tags into a new seed.
pub fn mix(base: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

/// A seeded RNG for the given base seed and tag path.
pub fn stream(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(base, path))
}
