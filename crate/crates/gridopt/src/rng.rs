//! Counter-based random generation.
//!
//! Every random draw in this crate comes from a keyed integer hash of
//! (seed, stream tags, counter). The integer stream is identical on every
//! platform, independent streams are derived per (slot, cell) so parallel
//! and serial generation agree, and the same seed always reproduces the
//! same outputs.

/// SplitMix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix(seed.wrapping_add(GOLDEN)),
            counter: 0,
        }
    }

    /// Derive an independent stream from this one, keyed by `tags`.
    /// Deriving with the same tags always yields the same stream.
    pub fn derive(&self, tags: &[u64]) -> Self {
        let mut key = self.key;
        for (i, t) in tags.iter().enumerate() {
            key = mix(key ^ mix(t.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 1))));
        }
        Self { key, counter: 0 }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Uniform draw in [lo, hi).
    #[inline]
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * ((self.next_u64() >> 11) as f64) * (1.0 / 9007199254740992.0)
    }

    /// Poisson draw. Exact for any finite rate: rates above 30 are split
    /// into chunks (Poisson additivity) and each chunk is drawn with the
    /// multiplicative method.
    pub fn poisson(&mut self, lambda: f64) -> u64 {
        debug_assert!(lambda >= 0.0 && lambda.is_finite());
        const CHUNK: f64 = 30.0;
        let mut total = 0u64;
        let mut remaining = lambda;
        while remaining > CHUNK {
            total += self.poisson_small(CHUNK);
            remaining -= CHUNK;
        }
        total + self.poisson_small(remaining)
    }

    fn poisson_small(&mut self, lambda: f64) -> u64 {
        if lambda <= 0.0 {
            return 0;
        }
        let threshold = (-lambda).exp();
        let mut k = 0u64;
        let mut p = 1.0f64;
        loop {
            p *= self.next_f64();
            if p <= threshold {
                return k;
            }
            k += 1;
        }
    }

    /// Zero-mean Laplace draw with E|x| = scale.
    pub fn laplace(&mut self, scale: f64) -> f64 {
        debug_assert!(scale >= 0.0);
        let u = self.next_f64() - 0.5;
        -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }
}
