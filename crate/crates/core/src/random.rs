//! Seeded Gaussian streams.
//!
//! Each `(seed, stream)` pair addresses an independent ChaCha8 keystream, so a
//! draw is a pure function of its coordinates regardless of evaluation order.
//! Normal deviates come from the Box–Muller transform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_POW_53: f64 = 9_007_199_254_740_992.0;

/// SplitMix64 finalizer, used to derive independent sub-seeds.
/// FNV-1a, for deriving stream ids from names.
pub fn str_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform and standard normal draws from one keystream.
pub struct SeededStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl SeededStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        SeededStream { rng, spare: None }
    }

    /// Uniform in `(0, 1]`.
    pub fn uniform_open0(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 / TWO_POW_53
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        // Widening multiply keeps the bias below 2^-64 * n.
        ((self.rng.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform_open0();
        let u2 = self.uniform_open0();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }
}

/// `n` standard normal draws from `(seed, stream)`.
pub fn normals(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut s = SeededStream::new(seed, stream);
    let mut out = vec![0.0; n];
    s.fill_normal(&mut out);
    out
}
