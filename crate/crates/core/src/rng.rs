//! Deterministic seed derivation.
//!
//! Every random draw in the crate flows from a base seed through
//! [`derive_seed`], so shuffles, augmentation and noise are reproducible
//! regardless of thread scheduling or call order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step; good avalanche behavior for seed mixing.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a base seed with a stream tag and an index into a new seed.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ tag.rotate_left(17)) ^ index)
}

/// Seeded RNG for a (tag, index) stream.
pub fn stream_rng(base: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tag, index))
}

/// Stream tags; distinct per use so streams never collide.
pub mod tags {
    pub const MODEL_INIT: u64 = 1;
    pub const EPOCH_SHUFFLE: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const CORPUS_CONTENT: u64 = 4;
    pub const CORPUS_NOISE: u64 = 5;
}
