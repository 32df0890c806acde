//! Deterministic random numbers for data generation and seeding.
//!
//! Everything downstream (scenario generation, baseline seeding, benchmark
//! trials) must replay bit-for-bit from a 64-bit seed, on any platform and
//! regardless of thread count. A counter-based SplitMix64 stream gives us
//! that: draw `i` depends only on `(seed, i)`, never on shared state, and
//! Gaussians come from an explicit Box-Muller transform so the number of
//! uniforms consumed per draw is fixed (two).

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed, counter: 0 }
    }

    /// Derives an independent seed for a sub-stream (trial, method, split...).
    /// Pure function of `(seed, tag)`, so callers can fan out without
    /// coordinating counters.
    pub fn derive(seed: u64, tag: u64) -> u64 {
        mix(seed ^ mix(tag.wrapping_mul(GOLDEN)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self
            .seed
            .wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in the inclusive range [lo, hi].
    pub fn uniform_int(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = hi - lo + 1; // hi = u64::MAX is not a use case here
        lo + self.next_u64() % span
    }

    /// Standard normal via Box-Muller (cosine branch). Consumes exactly two
    /// uniform draws, which keeps the draw order reproducible.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1], keeps ln finite
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn normal(&mut self, mean: f64, sigma: f64) -> f64 {
        mean + sigma * self.standard_normal()
    }
}
