//! Seedable, splittable random streams.
//!
//! Every stochastic routine takes either a plain `u64` seed or an
//! [`RngStream`] derived from one. Child streams are addressed by index, so
//! work split across threads draws the same numbers regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A ChaCha8 stream identified by `(seed, stream)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Independent child stream. Children of distinct parents or distinct
    /// indices never share a ChaCha stream id.
    pub fn split(&self, index: u64) -> Self {
        let child = splitmix(self.stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index);
        Self::with_stream(self.seed, child)
    }

    /// Derive a plain seed for APIs that take `u64`.
    pub fn derive_seed(&self, index: u64) -> u64 {
        splitmix(self.seed ^ splitmix(self.stream ^ index.rotate_left(17)))
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
