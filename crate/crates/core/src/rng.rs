//! Seeded, counter-friendly random number generation.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood 2014): the state advances
//! by the 64-bit golden-gamma constant `0x9E3779B97F4A7C15` and each output is
//! the finalizer
//!
//! ```text
//! z  = state;
//! z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9;
//! z ^= z >> 27;  z *= 0x94D049BB133111EB;
//! z ^= z >> 31;
//! ```
//!
//! Uniform doubles take the top 53 bits, so every value is a multiple of
//! `2^-53` in `[0, 1)`. These choices are fixed so that a stream can be
//! reproduced bit-for-bit by any implementation of the published algorithm.
//!
//! Independent substreams are derived rather than split sequentially:
//! [`substream`] hashes `(seed, domain, index)` into a fresh SplitMix64 seed.
//! Samplers key one substream per node or per ordered pair, which makes their
//! output independent of traversal order.

use crate::math;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 pseudo-random generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in `[0, 1)` with 53-bit resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Index drawn from the categorical distribution given by `probs`.
    ///
    /// Uses inverse-CDF lookup; `probs` is assumed non-negative. If rounding
    /// leaves the draw above the accumulated mass, the last positive category
    /// is returned.
    pub fn next_categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.next_f64();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (idx, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = idx;
            }
            acc += p;
            if u < acc {
                return idx;
            }
        }
        last_positive
    }

    /// Standard normal draw via the Marsaglia polar method.
    pub fn next_standard_normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * math::sqrt(-2.0 * math::ln(s) / s);
            }
        }
    }
}

/// Domain tags keeping unrelated substreams disjoint.
pub mod domain {
    /// Word draws, one substream per ordered pair.
    pub const PAIR: u64 = 1;
    /// Block-label draws, one substream per node.
    pub const NODE: u64 = 2;
    /// Covariate draws, one substream per ordered pair.
    pub const COVARIATE: u64 = 3;
    /// Variational-fit restarts, one substream per restart index.
    pub const RESTART: u64 = 4;
    /// Per-candidate streams in a block-count scan.
    pub const SELECT: u64 = 5;
    /// Replication streams in consistency experiments.
    pub const LAB: u64 = 6;
}

/// Generator for substream `index` of `domain` under a root `seed`.
pub fn substream(seed: u64, domain: u64, index: u64) -> SplitMix64 {
    SplitMix64::new(mix64(
        seed ^ mix64(domain.wrapping_mul(GOLDEN_GAMMA).wrapping_add(index)),
    ))
}
