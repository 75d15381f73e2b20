//! Seeding. All randomness flows from ChaCha8 streams seeded through
//! `seed_rng`; normal variates use the ziggurat sampler from `rand_distr`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seed_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a master seed and a tag
/// (replication index, column index, ...).
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    mix64(mix64(master) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}
