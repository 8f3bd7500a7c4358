//! Seed derivation. Every random draw in the crate goes through a ChaCha
//! stream keyed by `(seed, stream)`, so independent parts of an experiment
//! (graph, filter, data, split, init, ...) never share a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named sub-streams of a realization seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Graph = 1,
    Filter = 2,
    Data = 3,
    Split = 4,
    Init = 5,
    Subset = 6,
    Batches = 7,
    Noise = 8,
    Shifts = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    splitmix64(splitmix64(seed) ^ (stream as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_for(seed: u64, stream: Stream) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream))
}

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
