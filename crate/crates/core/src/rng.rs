//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from
//! the experiment seed and a fixed tag, so adding draws in one component
//! never shifts the randomness seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, tag: u64) -> Rng {
    // splitmix64 finalizer over (seed, tag)
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

pub mod tags {
    pub const SYNTH: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const TASKS: u64 = 3;
    pub const MODEL_INIT: u64 = 4;
    pub const TRAIN: u64 = 5;
    pub const REPLAY: u64 = 6;
    pub const BASELINE: u64 = 7;
    pub const GROW: u64 = 8;
}
