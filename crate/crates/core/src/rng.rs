//! Seed derivation.
//!
//! Every random decision in the crate is drawn from a [`ChaCha8Rng`] seeded
//! from `(root seed, stream name, index)`. Streams never share state, so a
//! dialog, an epoch, or an RL sample can be regenerated on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Named substreams used across the crate.
pub mod streams {
    pub const KB: &str = "kb";
    pub const OOV_KB: &str = "kb-oov";
    pub const DIALOG: &str = "dialog";
    pub const SUBSET: &str = "subset";
    pub const INIT: &str = "init";
    pub const BATCH: &str = "batch";
    pub const RL_SAMPLE: &str = "rl-sample";
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a; only needs to be stable, not strong.
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Derives the seed for `(root, label, index)`.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    splitmix(splitmix(root ^ splitmix(label_hash(label))) ^ index)
}

pub fn stream(root: u64, label: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(root, label, index))
}
