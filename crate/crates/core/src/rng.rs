//! Seeded, platform-stable randomness for simulation and sampling.
//!
//! Backed by PCG-XSH-RR 64/32 (`rand_pcg::Pcg32`, multiplier
//! 6364136223846793005). Every derived draw (uniform, bounded, Gaussian) is
//! implemented here so the streams stay fixed across dependency upgrades.

use rand_pcg::rand_core::RngCore;
use rand_pcg::Pcg32;

use crate::geometry::Vec3;

#[derive(Debug, Clone)]
pub struct SimRng {
    inner: Pcg32,
}

impl SimRng {
    /// `stream` selects one of 2^63 independent sequences for the same seed.
    pub fn new(seed: u64, stream: u64) -> Self {
        SimRng {
            inner: Pcg32::new(seed, stream),
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, n)`, unbiased (widening multiply with rejection).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Standard normal via Box-Muller; one draw consumes two `u64`s.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform direction on the unit sphere.
    pub fn unit_vector(&mut self) -> Vec3 {
        let z = 2.0 * self.uniform() - 1.0;
        let phi = std::f64::consts::TAU * self.uniform();
        let r = (1.0 - z * z).max(0.0).sqrt();
        Vec3::new(r * phi.cos(), r * phi.sin(), z)
    }
}
