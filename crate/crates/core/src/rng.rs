//! Seed derivation for reproducible random substreams.
//!
//! Every stochastic operation takes an explicit generator. Generators are
//! derived from a top-level seed plus a path of integer labels, so results
//! never depend on execution order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator type used throughout the crate.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `labels` into `seed`. Distinct label paths give unrelated seeds.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(seed), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

/// A generator for the substream `(seed, labels...)`.
pub fn stream(seed: u64, labels: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, labels))
}

/// Stable numeric tags for the independent consumers of randomness.
pub mod tag {
    pub const SCENARIO: u64 = 0x5CE0;
    pub const META: u64 = 0x3E7A;
    pub const OPTIMIZE: u64 = 0x0971;
    pub const RANK: u64 = 0x4A4C;
    pub const RESTART: u64 = 0x4E57;
}
