//! Deterministic seed derivation for independent random streams.
//!
//! Every randomized component draws from its own ChaCha stream whose seed is
//! derived from the user seed plus a role tag (and optional indices such as
//! fold or grid position). Streams are therefore independent of evaluation
//! order and of each other: enabling one randomized feature never perturbs
//! the draws of another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Role tags for the derived streams. Values are part of the reproducibility
/// contract: changing them changes every seeded result.
pub mod role {
    pub const TRAIN_X: u64 = 1;
    pub const TEST_X: u64 = 2;
    pub const COEF: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const LASSO_FOLDS: u64 = 5;
    pub const PSGD_PERMUTATION: u64 = 6;
    pub const CV_FOLDS: u64 = 7;
    pub const CV_CELL: u64 = 8;
    pub const CV_FINAL: u64 = 9;
    pub const REPLICATION: u64 = 10;
}

/// SplitMix64 finalizer; full-avalanche mixing of one word.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapses `(seed, tags...)` into a single stream seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut acc = mix(seed);
    for &t in tags {
        acc = mix(acc ^ mix(t));
    }
    acc
}

/// A ChaCha stream keyed by `(seed, tags...)`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// A seeded permutation of `0..n` via Fisher-Yates on the derived stream.
pub fn shuffled_indices(n: usize, seed: u64, tags: &[u64]) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, tags));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_stable_and_tag_sensitive() {
        let a = derive_seed(7, &[role::TRAIN_X]);
        let b = derive_seed(7, &[role::TRAIN_X]);
        let c = derive_seed(7, &[role::TEST_X]);
        let d = derive_seed(8, &[role::TRAIN_X]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn shuffle_is_deterministic() {
        let s1 = shuffled_indices(20, 42, &[role::CV_FOLDS]);
        let s2 = shuffled_indices(20, 42, &[role::CV_FOLDS]);
        assert_eq!(s1, s2);
        let mut sorted = s1.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    }
}
