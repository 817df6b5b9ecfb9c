//! Seeded random streams and categorical sampling.
//!
//! Every chain, trial and scenario owns an independent [`Xoshiro256PlusPlus`]
//! stream derived from a 64-bit root seed and a stream path, so results are
//! reproducible regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type ChainRng = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` along the path `ids`.
pub fn derive_seed(seed: u64, ids: &[u64]) -> u64 {
    ids.iter()
        .fold(splitmix64(seed), |acc, &id| splitmix64(acc ^ splitmix64(id.wrapping_add(GOLDEN))))
}

pub fn stream(seed: u64, ids: &[u64]) -> ChainRng {
    ChainRng::seed_from_u64(derive_seed(seed, ids))
}

/// Draws an index with probability proportional to `weights[k] / total` by a
/// linear scan of the cumulative sum.
///
/// `total` must equal the sum of `weights` up to rounding. Zero-weight
/// entries are never returned, including when rounding pushes the draw past
/// the last bucket.
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64], total: f64) -> usize {
    let target = rng.random::<f64>() * total;
    sample_categorical_at(weights, target)
}

pub(crate) fn sample_categorical_at(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = k;
            if target < acc {
                return k;
            }
        }
    }
    last_positive
}
