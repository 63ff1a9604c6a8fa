//! Certified base-2 logarithms of positive rationals.
//!
//! Dimension bounds divide sums of logarithms, and every reported bound must
//! round toward the safe side. [`log2_bounds`] returns exact rationals
//! `(lo, hi)` with `lo <= log2(x) <= hi`, computed by the shift-and-square
//! digit algorithm in fixed point with directed rounding. The enclosure
//! width is below `2^-120`, far finer than any tolerance used by callers.

use crate::{input_err, Rat, Result};
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};

/// Fractional bits produced by the digit loop.
const FRAC_BITS: u32 = 128;
/// Fixed-point scale of the internal mantissa.
const SCALE_BITS: u32 = 192;

/// Exact rational enclosure of `log2(x)` for `x > 0`.
pub fn log2_bounds(x: &Rat) -> Result<(Rat, Rat)> {
    if !x.is_positive() {
        return input_err("log2 requires a positive argument");
    }
    let p = x.numer().magnitude().clone();
    let q = x.denom().magnitude().clone();

    // find e with 2^e <= x < 2^(e+1)
    let mut e: i64 = p.bits() as i64 - q.bits() as i64;
    loop {
        if pow2_cmp(&p, &q, e) {
            if !pow2_cmp(&p, &q, e + 1) {
                break;
            }
            e += 1;
        } else {
            e -= 1;
        }
    }

    // mantissa of x * 2^-e at SCALE_BITS fractional bits, both roundings
    let (num, den) = shifted(&p, &q, e);
    let m_lo = &num / &den;
    let m_hi = if (&m_lo * &den) == num { m_lo.clone() } else { &m_lo + 1u32 };

    let frac_lo = digit_run(m_lo, false);
    let frac_hi = digit_run(m_hi, true);

    let scale = BigInt::from(BigUint::one() << FRAC_BITS);
    let lo = Rat::from(BigInt::from(e)) + Rat::new(BigInt::from(frac_lo), scale.clone());
    let hi = Rat::from(BigInt::from(e))
        + Rat::new(BigInt::from(frac_hi) + BigInt::from(2), scale);
    Ok((lo, hi))
}

/// Does `2^e <= p/q` hold?
fn pow2_cmp(p: &BigUint, q: &BigUint, e: i64) -> bool {
    if e >= 0 {
        *p >= (q.clone() << e as u64)
    } else {
        (p.clone() << (-e) as u64) >= *q
    }
}

/// Numerator/denominator of `(p/q) * 2^(SCALE_BITS - e)`.
fn shifted(p: &BigUint, q: &BigUint, e: i64) -> (BigUint, BigUint) {
    let shift = SCALE_BITS as i64 - e;
    if shift >= 0 {
        (p.clone() << shift as u64, q.clone())
    } else {
        (p.clone(), q.clone() << (-shift) as u64)
    }
}

/// Shift-and-square digit extraction. With `round_up = false` every step
/// rounds down and the produced digits underestimate the true fraction;
/// with `round_up = true` they overestimate it (up to the caller's slack).
fn digit_run(mut m: BigUint, round_up: bool) -> BigUint {
    let one_scaled = BigUint::one() << SCALE_BITS;
    let two_scaled = &one_scaled << 1u32;
    let mut bits = BigUint::zero();
    for _ in 0..FRAC_BITS {
        bits <<= 1u32;
        let sq = &m * &m;
        m = round_div(sq, SCALE_BITS, round_up);
        if m >= two_scaled {
            bits += 1u32;
            m = round_div(m, 1, round_up);
        }
    }
    bits
}

fn round_div(v: BigUint, shift: u32, round_up: bool) -> BigUint {
    let down = &v >> shift;
    if round_up && (&down << shift) != v {
        down + 1u32
    } else {
        down
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat;

    fn width(lo: &Rat, hi: &Rat) -> Rat {
        hi - lo
    }

    #[test]
    fn exact_powers() {
        let (lo, hi) = log2_bounds(&rat(8, 1)).unwrap();
        assert!(lo <= rat(3, 1) && rat(3, 1) <= hi);
        let (lo, hi) = log2_bounds(&rat(1, 4)).unwrap();
        assert!(lo <= rat(-2, 1) && rat(-2, 1) <= hi);
        let (lo, hi) = log2_bounds(&rat(1, 1)).unwrap();
        assert!(lo <= rat(0, 1) && rat(0, 1) <= hi);
    }

    #[test]
    fn log2_three() {
        let (lo, hi) = log2_bounds(&rat(3, 1)).unwrap();
        // 1.5849625007 < log2 3 < 1.5849625008
        assert!(lo > rat(15849625007, 10000000000));
        assert!(hi < rat(15849625008, 10000000000));
    }

    #[test]
    fn tight_enclosures() {
        for (n, d) in [(7, 5), (1, 3), (99991, 7), (1, 1024), (12345678901234i64, 999)] {
            let x = rat(n, d);
            let (lo, hi) = log2_bounds(&x).unwrap();
            assert!(lo <= hi);
            let w = width(&lo, &hi);
            let cap = Rat::new(1.into(), num_bigint::BigInt::from(2).pow(120));
            assert!(w < cap, "width too large for {n}/{d}");
            // sanity against floating point
            let f = (n as f64 / d as f64).log2();
            assert!(crate::rat_f64(&lo) <= f + 1e-9);
            assert!(crate::rat_f64(&hi) >= f - 1e-9);
        }
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(log2_bounds(&rat(0, 1)).is_err());
        assert!(log2_bounds(&rat(-3, 7)).is_err());
    }
}
