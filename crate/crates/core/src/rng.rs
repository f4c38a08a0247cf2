//! Deterministic random stream shared by every stochastic routine.
//!
//! The generator is xoshiro256++ seeded from a `u64` through SplitMix64. All
//! derived draws are defined here so that a seed reproduces the same sequence
//! in any implementation:
//!
//! * `uniform()` = `(next_u64() >> 11) * 2^-53`, in `[0, 1)`
//! * `index(n)` = `next_u64() mod n`
//! * `shuffle` = Fisher-Yates from the last position down, `j = index(i + 1)`
//! * `normal()` = Box-Muller cosine branch on `u1 = 1 - uniform()`, `u2 = uniform()`
//! * `fork(stream)` seeds a child generator with `SplitMix64(seed ^ stream * 0x9E3779B97F4A7C15)`

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct DetRng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child generator for an independent sub-stream (per tree, per layer, ...).
    /// Depends only on the parent's seed, never on how far the parent has advanced.
    pub fn fork(&self, stream: u64) -> DetRng {
        DetRng::new(derive_seed(self.seed, stream))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index() on an empty range");
        (self.next_u64() % n as u64) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Standard normal truncated to `[-bound, bound]` by redrawing.
    pub fn truncated_normal(&mut self, bound: f64) -> f64 {
        loop {
            let z = self.normal();
            if z.abs() <= bound {
                return z;
            }
        }
    }

    /// Poisson draw: Knuth's product method below 30, rounded normal above.
    pub fn poisson(&mut self, lambda: f64) -> u64 {
        if lambda <= 0.0 {
            return 0;
        }
        if lambda < 30.0 {
            let limit = (-lambda).exp();
            let mut k = 0u64;
            let mut p = self.uniform();
            while p > limit {
                k += 1;
                p *= self.uniform();
            }
            k
        } else {
            (lambda + lambda.sqrt() * self.normal()).round().max(0.0) as u64
        }
    }
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    SplitMix64::seed_from_u64(seed ^ stream.wrapping_mul(GOLDEN)).next_u64()
}
