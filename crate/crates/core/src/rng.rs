//! Seed discipline.
//!
//! Every stochastic operation takes an explicit `&mut ChainRng`. Child
//! generators are derived from a parent seed and a path of labels, so any
//! quantity is a pure function of `(master_seed, arm, run, ...)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Derives a child seed from a parent seed and a labelled index.
pub fn derive_seed(parent: u64, label: &str, index: u64) -> u64 {
    mix64(mix64(parent ^ label_hash(label)) ^ mix64(index))
}

pub fn rng_from_seed(seed: u64) -> ChainRng {
    ChainRng::seed_from_u64(seed)
}

pub fn child_rng(parent: u64, label: &str, index: u64) -> ChainRng {
    rng_from_seed(derive_seed(parent, label, index))
}
