//! Seeded deterministic random number generation.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood, "Fast splittable
//! pseudorandom number generators", OOPSLA 2014): a 64-bit counter advanced
//! by the golden-gamma constant and finalized with a bijective mix. It has
//! no configuration, passes BigCrush, and — together with the `libm`-backed
//! math in this crate — produces identical streams on every platform for a
//! given seed.

use crate::fmath;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Deterministic pseudorandom generator (SplitMix64).
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    /// Spare deviate from the last Marsaglia polar round.
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed, spare_normal: None }
    }

    /// Next raw 64-bit value.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 random mantissa bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal deviate via the Marsaglia polar method.
    ///
    /// The method produces deviates in pairs; the second of each pair is
    /// cached, so the mapping from seed to stream stays deterministic.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = fmath::sqrt(-2.0 * fmath::ln(s) / s);
                self.spare_normal = Some(v * m);
                return u * m;
            }
        }
    }

    /// Zero-mean normal deviate with the given standard deviation.
    pub fn normal_scaled(&mut self, std_dev: f64) -> f64 {
        self.normal() * std_dev
    }
}
