//! Deterministic derivation of independent random streams from one run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_MOBILITY: u64 = 1;
pub const STREAM_CHANNEL: u64 = 2;
pub const STREAM_AGENT: u64 = 3;
pub const STREAM_INIT: u64 = 4;

/// A ChaCha stream keyed by `seed`, on stream number `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finaliser, used to spread (seed, index) pairs into new seeds.
pub fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Environment seed for training episode `episode` of run `seed`.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    mix(seed, episode as u64)
}

/// Environment seed for evaluation episode `episode`; disjoint from training seeds.
pub fn eval_seed(seed: u64, episode: usize) -> u64 {
    mix(seed ^ 0xE7A1_0000_0000_0000, episode as u64)
}
