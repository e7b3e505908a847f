//! Seeding utilities.
//!
//! Every stochastic operation in this crate takes an explicit RNG handle, and
//! replicated work is parallelized by deriving one independent seed per unit
//! of work from a single master seed. The derivation is a fixed SplitMix64
//! chain so that experiment outputs are a pure function of the master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used by all samplers. ChaCha8 is seedable, portable and fast, so
/// fixing the seed fixes every downstream draw bit-exactly.
pub type ChainRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a path of indices
/// (e.g. `[grid_index, replicate_index]`). Distinct paths give
/// independent-looking seeds; equal paths give equal seeds.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0xd1b5_4a32_d192_ed03)));
    }
    h
}

/// Builds the chain RNG for a given seed.
pub fn seeded_rng(seed: u64) -> ChainRng {
    ChainRng::seed_from_u64(seed)
}

/// A uniform draw on (0, 1], safe to pass through `ln`.
#[inline]
pub fn uniform_open(rng: &mut ChainRng) -> f64 {
    let u: f64 = rand::Rng::random(rng);
    if u == 0.0 {
        f64::MIN_POSITIVE
    } else {
        u
    }
}
