//! Counter-based pseudo-random generator.
//!
//! Output `i` of stream `seed` is `splitmix64(seed ^ GOLDEN * i)`-style
//! mixing of a plain counter, so any draw can be reproduced from
//! `(seed, counter)` alone and results are identical on every platform.

/// Deterministic counter-based RNG (SplitMix64 finalizer over a counter).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> CounterRng {
        CounterRng { seed, counter: 0 }
    }

    /// Independent substream `index` of this seed.
    pub fn stream(seed: u64, index: u64) -> CounterRng {
        CounterRng {
            seed: mix(seed ^ mix(index.wrapping_add(0x9E3779B97F4A7C15))),
            counter: 0,
        }
    }

    pub fn state(&self) -> (u64, u64) {
        (self.seed, self.counter)
    }

    pub fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter += 1;
        mix(self.seed.wrapping_add(c.wrapping_mul(0x9E3779B97F4A7C15)))
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        // 128-bit multiply avoids modulo bias well enough for n << 2^64
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn next_bool(&mut self) -> bool {
        self.next_u64() & 1 == 1
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64().max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
