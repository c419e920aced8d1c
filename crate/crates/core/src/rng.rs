//! Seed derivation for reproducible trial farms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stable generator type used everywhere randomness is needed.
pub type SimRng = ChaCha8Rng;

/// One round of splitmix64 over `seed ^ index`, giving decorrelated child seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        ^ index
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
