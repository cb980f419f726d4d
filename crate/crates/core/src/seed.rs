//! Deterministic seed derivation.
//!
//! Every random stream in the crate is derived from a base seed and a tuple of
//! integer coordinates, so results never depend on iteration or thread order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random source used throughout the crate.
pub type SampleRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a base seed with a sample index and a stream tag.
pub fn mix(base: u64, index: u64, tag: u64) -> u64 {
    let h = splitmix64(base);
    let h = splitmix64(h ^ index);
    splitmix64(h ^ tag.rotate_left(32))
}

pub fn rng_from(seed: u64) -> SampleRng {
    SampleRng::seed_from_u64(seed)
}
