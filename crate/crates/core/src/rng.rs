//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit seed or generator. Parallel work
//! is split into logical streams whose seeds are derived from a master seed, so
//! results never depend on how many threads ran them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for logical stream `stream` under `master`.
pub fn mix(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(stream.wrapping_add(0x632b_e59b_d9b4_e019)))
}

pub fn stream(master: u64, stream: u64) -> StreamRng {
    StreamRng::seed_from_u64(mix(master, stream))
}

pub fn seeded(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
