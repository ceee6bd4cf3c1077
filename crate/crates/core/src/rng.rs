//! Seeded randomness.
//!
//! Every stochastic step in the crate draws from ChaCha8 seeded with a `u64`.
//! ChaCha output is specified bit-for-bit, so results are identical across
//! platforms. Independent streams (per sentence, per probe, per stage) get
//! their own seed through [`derive_seed`] so that work can be split across
//! threads without changing any result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes `seed` and a stream index with the SplitMix64 finalizer.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
