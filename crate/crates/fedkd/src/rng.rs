//! Deterministic RNG stream derivation.
//!
//! Every source of randomness in a run is a ChaCha stream derived from the
//! experiment seed plus a fixed tag path, e.g. `(CLIENT, client_id, round)`.
//! Streams are independent of execution order and thread count, which is what
//! makes whole experiments replayable byte-for-byte.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Each distinct consumer of randomness gets its own tag so
/// streams never alias.
pub mod stream {
    pub const MODEL_INIT: u64 = 1;
    pub const GENERATOR_INIT: u64 = 2;
    pub const SERVER_ROUND: u64 = 3;
    pub const CLIENT: u64 = 4;
    pub const GENERATOR_TRAIN: u64 = 5;
    pub const FUSION: u64 = 6;
    pub const PROTOTYPE: u64 = 7;
    pub const DIRICHLET: u64 = 8;
    pub const SUBSAMPLE: u64 = 9;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive an independent RNG from a seed and a tag path.
pub fn derive_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(seed ^ 0x6A09_E667_F3BC_C909);
    for &tag in tags {
        state = splitmix64(state ^ splitmix64(tag ^ 0xBB67_AE85_84CA_A73B));
    }
    ChaCha8Rng::seed_from_u64(state)
}
