//! Seeded random streams.
//!
//! All randomness goes through ChaCha20 (64-bit block counter, stream id
//! selectable) so filter weights and noise are reproducible across platforms.
//! Floats are derived from raw `u64` draws here rather than through `rand`
//! distributions, whose value stability is not guaranteed between releases.

use core::f64::consts::TAU;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Name and revision of the generator; recorded by callers that persist seeds.
pub const GENERATOR: &str = "chacha20-v1";

/// Stream ids. Filter bank layer `i` uses stream `i` (below 256).
pub mod streams {
    pub const ANCHOR: u64 = 0x100;
    pub const SYNTH_INIT: u64 = 0x101;
    pub const GRADCHECK: u64 = 0x102;
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [lo, hi].
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Standard normal via Box-Muller, one value per pair of draws.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(TAU * u2)
    }
}
