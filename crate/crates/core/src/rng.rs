//! Seeded randomness. Every stochastic stage derives its own stream from a
//! base seed and a stage tag, so results never depend on call order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    mix64(seed ^ mix64(fnv1a(tag.as_bytes())))
}

pub fn derive_seed_indexed(seed: u64, tag: &str, index: u64) -> u64 {
    mix64(derive_seed(seed, tag) ^ mix64(index.wrapping_add(1)))
}

pub fn rng_from(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
pub fn normal(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn permutation(rng: &mut SeededRng, n: usize) -> alloc::vec::Vec<usize> {
    let mut p: alloc::vec::Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
