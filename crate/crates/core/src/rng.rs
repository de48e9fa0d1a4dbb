//! Pinned, platform-independent randomness for walks.
//!
//! Every random decision in a walk flows through [`WalkRng`]: ChaCha8
//! seeded from the 64-bit walk identifier, with uniform integer draws by
//! rejection sampling so there is no modulo bias and the draw sequence is
//! reproducible on any platform.

use rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct WalkRng(ChaCha8Rng);

impl WalkRng {
    pub fn seed_from(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform draw from `0..n` by rejection. Panics if `n` is zero.
    pub fn uniform_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform_index over empty range");
        let n = n as u64;
        // 2^64 mod n; draws at or above 2^64 - rem are rejected.
        let rem = (u64::MAX % n + 1) % n;
        loop {
            let x = self.0.next_u64();
            if rem == 0 || x < u64::MAX - rem + 1 {
                return (x % n) as usize;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = WalkRng::seed_from(42);
        let mut b = WalkRng::seed_from(42);
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn pinned_stream_head() {
        // Freezes the generator choice: if the underlying algorithm ever
        // changed, recorded campaigns would stop being reproducible.
        let mut rng = WalkRng::seed_from(0);
        let head: Vec<u64> = (0..2).map(|_| rng.next_u64()).collect();
        assert_eq!(head, vec![13080132717333068652, 8594738769458413623]);
    }

    #[test]
    fn uniform_index_in_range_and_covers() {
        let mut rng = WalkRng::seed_from(7);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            let i = rng.uniform_index(7);
            assert!(i < 7);
            seen[i] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(rng.uniform_index(1), 0);
    }
}
