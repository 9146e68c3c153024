//! Seeded random streams.
//!
//! Every stochastic routine in the crate draws from [`Xoshiro256StarStar`],
//! seeded through SplitMix64 (`SeedableRng::seed_from_u64`). Independent
//! substreams (one per trial or Monte Carlo chunk) are derived with
//! [`substream_seed`], so a run split across threads consumes exactly the
//! same random numbers as the sequential run.

use rand_core::{RngCore, SeedableRng};
pub use rand_xoshiro::Xoshiro256StarStar;

/// Name recorded in report metadata.
pub const PRNG_NAME: &str = "xoshiro256** (splitmix64 seeding)";

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function: `z = x + 0x9E3779B97F4A7C15`, then
/// `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31`
/// (all arithmetic wrapping modulo 2^64).
pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of substream `index` under master seed `seed`:
/// `mix64(mix64(seed) ^ index)`.
///
/// The master seed is mixed first. With a plain `seed ^ index`, seeds 2 and
/// 3 would hand out the same set of substreams, just permuted.
pub fn substream_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index)
}

pub fn stream(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

pub fn substream(seed: u64, index: u64) -> Xoshiro256StarStar {
    stream(substream_seed(seed, index))
}

/// Uniform double in `[0, 1)` from the top 53 bits of one output.
#[inline]
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Integer in `0..bound` by the multiply-shift map `(x * bound) >> 64`.
///
/// Bias is below `bound / 2^64`, which is irrelevant at the array sizes used
/// here, and the map is trivially reproducible in other languages.
#[inline]
pub fn below<R: RngCore + ?Sized>(rng: &mut R, bound: u64) -> u64 {
    ((rng.next_u64() as u128 * bound as u128) >> 64) as u64
}

/// Uniformly random permutation of `0..n` (Fisher–Yates, swapping position
/// `i` with `below(i + 1)` for `i = n-1, …, 1`).
pub fn random_permutation<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> Vec<u32> {
    assert!(n <= u32::MAX as usize, "permutation size exceeds u32 key space");
    let mut keys: Vec<u32> = (0..n as u32).collect();
    shuffle(rng, &mut keys);
    keys
}

pub fn shuffle<R: RngCore + ?Sized, T>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}
