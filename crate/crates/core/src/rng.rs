//! Counter-based Gaussian noise.
//!
//! Every draw is a pure function of `(seed, realization, step, neuron)`: the
//! four coordinates are hashed into a key, and the key drives a tiny
//! counter stream (SplitMix64 finalizer applied to `key + k·γ`) that feeds
//! the ziggurat sampler. No generator state is shared between neurons, so
//! any evaluation order, thread count, or replay (the coupled mean-field
//! companion reuses the network's increments) yields identical numbers.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const REALIZATION_SALT: u64 = 0xD1B5_4A32_D192_ED03;
const STEP_SALT: u64 = 0xAEF1_7502_108E_F2D9;

/// Step index reserved for initial-condition draws.
pub const INITIAL_STEP: u64 = u64::MAX;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct CounterStream {
    key: u64,
    counter: u64,
}

impl RngCore for CounterStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Noise for one realization at one time step.
#[derive(Debug, Clone, Copy)]
pub struct StepNoise {
    base: u64,
}

impl StepNoise {
    pub fn new(seed: u64, realization: u64, step: u64) -> Self {
        let a = mix64(seed ^ 0x6A09_E667_F3BC_C908);
        let b = mix64(a ^ realization.wrapping_mul(REALIZATION_SALT));
        StepNoise { base: mix64(b ^ step.wrapping_mul(STEP_SALT)) }
    }

    /// Standard Gaussian draw for `neuron`.
    #[inline]
    pub fn normal(&self, neuron: u64) -> f64 {
        let mut stream = CounterStream { key: mix64(self.base ^ neuron.wrapping_mul(GOLDEN)), counter: 0 };
        StandardNormal.sample(&mut stream)
    }

    /// Uniform draw in `[0, 1)` for `neuron`.
    #[inline]
    pub fn uniform(&self, neuron: u64) -> f64 {
        let mut stream = CounterStream { key: mix64(self.base ^ neuron.wrapping_mul(GOLDEN)), counter: 0 };
        (stream.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn fill_normals(&self, out: &mut [f64]) {
        for (i, x) in out.iter_mut().enumerate() {
            *x = self.normal(i as u64);
        }
    }
}
