//! Seeded random streams.
//!
//! Every consumer draws from `(master_seed, stream_id)`; adding a stream
//! never perturbs another one.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as StreamRng;

/// Stream ids reserved by the trainer. Trial and scene indices use their own
/// seeds, so these only need to be unique within one training run.
pub mod streams {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const LABELED_AUG: u64 = 16;
    pub const UNLABELED_AUG: u64 = 32;
    pub const CUTOUT: u64 = 48;
}

/// RNG for stream `stream` of `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent master seed for a named sub-experiment.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
