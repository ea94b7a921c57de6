//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`seeded`], a ChaCha8 stream
//! keyed by a 64-bit seed. ChaCha output is specified bit-for-bit, so splits,
//! folds and simulated samples are identical across platforms.
//!
//! Child seeds for replications and sub-streams come from [`derive_seed`]:
//! the SplitMix64 finalizer applied to `root + (index + 1) * 0x9E3779B97F4A7C15`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Counter-based child seed: `splitmix64(root + (index + 1) * gamma)`.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fisher–Yates shuffle of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(seed));
    idx
}
