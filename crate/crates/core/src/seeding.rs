//! Named random sub-streams derived from one 64-bit master seed.
//!
//! A stream is identified by `(master, purpose, index...)`; the mixing is a
//! pure function, so results never depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    ShockSize = 1,
    ShockIndicator = 2,
    ObservationNoise = 3,
    Replication = 4,
    Thinning = 5,
    LatentIntensity = 6,
    Counts = 7,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a child seed from a master seed and a path of tags.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

/// RNG for one named sub-stream.
pub fn stream(master: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, &[purpose as u64, index]))
}
