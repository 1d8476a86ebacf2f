//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha20Rng`] seeded through
//! [`stream`]. A stream is addressed by a base seed plus a path of integer
//! labels (cell id, replica id, purpose tag), mixed with SplitMix64, so
//! parallel workers own disjoint, reproducible streams regardless of
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Stream purpose tags used below the replica level.
pub mod tag {
    pub const PERTURB: u64 = 1;
    pub const SAMPLE: u64 = 2;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a label path.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &label| {
        splitmix64(acc ^ splitmix64(label))
    })
}

pub fn stream(base: u64, path: &[u64]) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(base, path))
}
