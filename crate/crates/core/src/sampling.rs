//! Deterministic Halton sampling of joint space.

use alloc::vec::Vec;

use crate::kinematics::Configuration;

/// Offset between the Halton streams of consecutive trials.
pub const TRIAL_SEED_STRIDE: u64 = 10_000;

/// The first `n` primes.
pub fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| !candidate.is_multiple_of(p)) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Radical inverse of `index` in `base`, computed with exact integer
/// digit reversal and a single final division.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let b = base as u128;
    let (mut reversed, mut denom) = (0u128, 1u128);
    while index > 0 {
        let i = index as u128;
        reversed = reversed * b + i % b;
        denom *= b;
        index = (i / b) as u64;
    }
    reversed as f64 / denom as f64
}

/// One Halton stream: dimension `k` uses the `k`-th prime as its base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HaltonState {
    index: u64,
    bases: Vec<u64>,
    seed_offset: u64,
}

impl HaltonState {
    pub fn new(dims: usize, seed_offset: u64) -> Self {
        Self { index: 1, bases: first_primes(dims), seed_offset }
    }

    /// Stream for trial `trial`, offset by [`TRIAL_SEED_STRIDE`] per trial.
    pub fn for_trial(dims: usize, base_offset: u64, trial: u64) -> Self {
        Self::new(dims, base_offset + trial * TRIAL_SEED_STRIDE)
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn bases(&self) -> &[u64] {
        &self.bases
    }

    /// Next point of the unit hypercube.
    pub fn next_unit(&mut self) -> Vec<f64> {
        let n = self.index + self.seed_offset;
        self.index += 1;
        self.bases.iter().map(|&b| radical_inverse(n, b)).collect()
    }

    /// Next sample mapped affinely onto the per-joint `limits`.
    pub fn next_sample(&mut self, limits: &[[f64; 2]]) -> Configuration {
        debug_assert_eq!(limits.len(), self.bases.len());
        let u = self.next_unit();
        Configuration(u.iter().zip(limits).map(|(u, [lo, hi])| lo + (hi - lo) * u).collect())
    }
}
