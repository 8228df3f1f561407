//! Deterministic seed derivation.
//!
//! Every randomized stage (suite sampling, oracle noise, weight init,
//! epoch shuffling, dropout) draws from a [`rand_chacha::ChaCha8Rng`]
//! seeded through these helpers, so a single user-facing seed expands into
//! independent, platform-stable streams. The derivation is FNV-1a over the
//! tag bytes followed by a splitmix64 finalizer; it is part of the
//! reproducibility contract and must not change between releases.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives an independent child seed from `base` and a purpose tag.
pub fn child_seed(base: u64, tag: &str) -> u64 {
    let mut h = FNV_OFFSET ^ base;
    for &b in tag.as_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

/// Derives a child seed indexed by a counter (benchmark id, epoch, ...).
pub fn child_seed_n(base: u64, tag: &str, n: u64) -> u64 {
    splitmix64(child_seed(base, tag) ^ splitmix64(n))
}

/// ChaCha8 stream for the given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
