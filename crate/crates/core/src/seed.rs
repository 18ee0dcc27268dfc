//! Reproducible seed derivation.
//!
//! Every random stream in the crate is keyed by a 64-bit token. Child
//! streams (per chain, per replica, per grid point) are derived from a
//! master token with a SplitMix64-style mixer so that the value depends
//! only on the derivation path and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a path of labels.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(master.wrapping_add(GOLDEN)), |acc, &label| {
        mix(acc ^ mix(label.wrapping_add(GOLDEN).wrapping_mul(GOLDEN)))
    })
}

/// The generator used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
