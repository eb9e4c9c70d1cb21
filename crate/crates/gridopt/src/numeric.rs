//! Small numerical helpers: compensated summation and range-guarded
//! products of probability terms.

/// Neumaier-compensated accumulator.
///
/// All series totals and field reductions in this crate go through this type
/// in a fixed order, so results are bit-reproducible and the accumulated
/// rounding error stays at one ulp of the result rather than growing with the
/// term count.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.comp += (self.sum - t) + value;
        } else {
            self.comp += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    pub fn sum_iter<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
        let mut acc = Self::new();
        for v in iter {
            acc.add(v);
        }
        acc.value()
    }
}

const BLOCK_UP: f64 = 1.157920892373162e77; // 2^256
const BLOCK_DOWN: f64 = 8.636168555094445e-78; // 2^-256

/// A non-negative value kept as `mant * 2^(256*block)` so that Poisson-term
/// recurrences never underflow, no matter how large the rate is.
///
/// Probability masses like e^-lambda vanish below f64 range once lambda
/// exceeds ~745; walking the pmf recurrence from such a start would turn the
/// whole series into zeros. Tracking a block exponent keeps the mantissa in
/// a representable band while the recurrence stays algebraically identical.
#[derive(Clone, Copy, Debug)]
pub struct ScaledNonNeg {
    mant: f64,
    block: i64,
}

impl ScaledNonNeg {
    /// e^-lambda for lambda >= 0, however large.
    pub fn exp_neg(lambda: f64) -> Self {
        debug_assert!(lambda >= 0.0 && lambda.is_finite());
        if lambda == 0.0 {
            return Self {
                mant: 1.0,
                block: 0,
            };
        }
        let log2v = -lambda * std::f64::consts::LOG2_E;
        let block = (log2v / 256.0).floor();
        let mant = (log2v - 256.0 * block).exp2();
        let mut out = Self {
            mant,
            block: block as i64,
        };
        out.renorm();
        out
    }

    #[inline]
    pub fn mul(&mut self, factor: f64) {
        debug_assert!(factor >= 0.0);
        self.mant *= factor;
        self.renorm();
    }

    #[inline]
    fn renorm(&mut self) {
        if self.mant == 0.0 {
            self.block = 0;
            return;
        }
        while self.mant >= BLOCK_UP {
            self.mant *= BLOCK_DOWN;
            self.block += 1;
        }
        while self.mant < BLOCK_DOWN {
            self.mant *= BLOCK_UP;
            self.block -= 1;
        }
    }

    #[inline]
    fn collapse(mant: f64, block: i64) -> f64 {
        if block == 0 {
            return mant;
        }
        let mut v = mant;
        if block < 0 {
            // anything below ~2^-1074 reaches exact zero on the way down
            for _ in 0..(-block).min(8) {
                v *= BLOCK_DOWN;
                if v == 0.0 {
                    return 0.0;
                }
            }
            if block < -8 {
                return 0.0;
            }
        } else {
            for _ in 0..block {
                v *= BLOCK_UP;
                if !v.is_finite() {
                    return f64::INFINITY;
                }
            }
        }
        v
    }

    /// Collapse to f64; values below f64 range flush to zero.
    #[inline]
    pub fn to_f64(&self) -> f64 {
        Self::collapse(self.mant, self.block)
    }

    /// Product of two tracked values, collapsed to f64. Used for terms
    /// p1 * p2 where each factor alone may be far outside f64 range but the
    /// product is an ordinary probability.
    #[inline]
    pub fn product_f64(&self, other: &Self) -> f64 {
        // both mantissas < 2^256, so the product < 2^512 stays finite
        Self::collapse(self.mant * other.mant, self.block + other.block)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_beats_plain_sum() {
        // 1 + many tiny values that plain summation loses entirely
        let mut acc = CompensatedSum::new();
        acc.add(1.0);
        for _ in 0..1_000_000 {
            acc.add(1e-18);
        }
        let expected = 1.0 + 1e-12;
        assert!((acc.value() - expected).abs() < 1e-15);
    }

    #[test]
    fn scaled_exp_neg_matches_direct_in_range() {
        for &l in &[0.0, 0.5, 1.0, 20.0, 300.0, 700.0] {
            let s = ScaledNonNeg::exp_neg(l).to_f64();
            let d = (-l).exp();
            assert!((s - d).abs() <= 1e-14 * d.max(1e-300), "lambda={l}");
        }
    }

    #[test]
    fn scaled_recurrence_survives_huge_rates() {
        // pmf of Poisson(5000) at its mode, via the recurrence from k=0
        let lambda = 5000.0;
        let mut p = ScaledNonNeg::exp_neg(lambda);
        for k in 0..5000u64 {
            p.mul(lambda / (k + 1) as f64);
        }
        let at_mode = p.to_f64();
        // Stirling: pmf at mode ~ 1/sqrt(2 pi lambda)
        let approx = 1.0 / (2.0 * std::f64::consts::PI * lambda).sqrt();
        assert!(
            (at_mode - approx).abs() < 0.01 * approx,
            "got {at_mode}, expected about {approx}"
        );
    }

    #[test]
    fn product_of_underflowing_halves() {
        let a = ScaledNonNeg::exp_neg(600.0);
        let b = ScaledNonNeg::exp_neg(500.0);
        let direct = (-1100.0f64).exp(); // underflows to 0 in plain f64
        assert_eq!(direct, 0.0);
        let tracked = a.product_f64(&b);
        // e^-1100 is ~1e-478, below f64 range: the collapsed product flushes
        // to zero but the tracked mantissas stay usable for further terms.
        assert_eq!(tracked, 0.0);
        let c = ScaledNonNeg::exp_neg(100.0);
        let d = ScaledNonNeg::exp_neg(100.0);
        let p = c.product_f64(&d);
        assert!((p - (-200.0f64).exp()).abs() < 1e-100);
    }
}
