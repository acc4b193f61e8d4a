//! Portable seeded random source.
//!
//! Every random draw in the crate goes through [`SeededRng`], which wraps the
//! SplitMix64 generator (64-bit state, Steele/Lea/Flood 2014). Uniform floats
//! are built from the top 53 bits of each output word, `u = (x >> 11) * 2^-53`,
//! so a draw sequence can be reproduced bit-for-bit from any language given
//! the seed.

use rand_core::RngCore;
use rand_xoshiro::SplitMix64;
use rand_core::SeedableRng;

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: SplitMix64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * INV_2_53
    }

    /// Uniform on `[lo, hi)`; returns `lo` exactly when the range is collapsed.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in `0..n` by multiply-shift on the 64-bit word.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher–Yates shuffle, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
