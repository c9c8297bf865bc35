//! Seed derivation.
//!
//! Every experiment is driven by one 64-bit master seed. Independent streams
//! (one per simulated user, per protocol phase) are derived with [`split`],
//! which mixes the master seed, a stream tag and an index through the
//! SplitMix64 finalizer. The derived value seeds a ChaCha8 generator, so a
//! given `(master, tag, index)` always produces the same sequence regardless
//! of the order in which streams are created.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Distinct tags keep the per-user streams of different
/// protocol phases independent under the same master seed.
pub mod tag {
    pub const PEM: u64 = 0x5045_4d00;
    pub const SPM: u64 = 0x5350_4d00;
    pub const MCM: u64 = 0x4d43_4d00;
    pub const DATAGEN: u64 = 0x4745_4e00;
    pub const ORACLE: u64 = 0x4f52_4300;
    pub const CHANNEL: u64 = 0x4348_4e00;
    pub const REPETITION: u64 = 0x5245_5000;
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function: a bijective 64-bit avalanche mixer.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of stream `index` under `tag` from `master`.
///
/// `split(m, t, i) = mix64(mix64(mix64(m + γ) ^ t) + (i + 1)·γ)` with γ the
/// 64-bit golden-ratio increment.
pub fn split(master: u64, tag: u64, index: u64) -> u64 {
    let base = mix64(mix64(master.wrapping_add(GOLDEN_GAMMA)) ^ tag);
    mix64(base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Generator for stream `index` under `tag`.
pub fn stream(master: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split(master, tag, index))
}
