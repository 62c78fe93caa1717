//! Exact rational arithmetic helpers on top of `num`'s `BigRational`.
//!
//! All circle points, breakpoints, slopes, measures and rotation angles in
//! this crate are reduced big rationals; floats enter only through the
//! estimation layer in [`crate::hp`].

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rat = BigRational;

/// `n/d` as a reduced rational.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn rat_zero() -> Rat {
    Rat::zero()
}

pub fn rat_one() -> Rat {
    Rat::one()
}

/// 2^k for possibly negative k.
pub fn pow2(k: i64) -> Rat {
    let mag = BigInt::one() << k.unsigned_abs() as usize;
    if k >= 0 {
        Rat::from_integer(mag)
    } else {
        Rat::new(BigInt::one(), mag)
    }
}

/// Parses "p/q", "p", or "-p/q". Whitespace around tokens is tolerated.
pub fn rat_from_str(s: &str) -> Option<Rat> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let num: BigInt = p.trim().parse().ok()?;
        let den: BigInt = q.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        Some(Rat::new(num, den))
    } else {
        let num: BigInt = s.parse().ok()?;
        Some(Rat::from_integer(num))
    }
}

/// Lossless "p/q" form ("p" when the denominator is 1).
pub fn rat_to_string(r: &Rat) -> String {
    if r.denom().is_one() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Largest integer ≤ r.
pub fn floor_int(r: &Rat) -> BigInt {
    r.numer().div_floor(r.denom())
}

/// Representative of r mod 1 in [0, 1).
pub fn mod1(r: &Rat) -> Rat {
    let f = r - Rat::from_integer(floor_int(r));
    debug_assert!(!f.is_negative() && f < Rat::one());
    f
}

/// Distance from a to b along the circle (≤ 1/2).
pub fn circle_dist(a: &Rat, b: &Rat) -> Rat {
    let d = mod1(&(a - b));
    let alt = Rat::one() - &d;
    if d <= alt {
        d
    } else {
        alt
    }
}

/// Decimal digit count of a positive integer.
pub fn digits(n: &BigUint) -> u64 {
    if n.is_zero() {
        return 1;
    }
    n.to_str_radix(10).len() as u64
}

/// Exact square root of a rational, if one exists.
pub fn sqrt_exact(r: &Rat) -> Option<Rat> {
    if r.is_negative() {
        return None;
    }
    let (num, den) = (r.numer().magnitude(), r.denom().magnitude());
    let sn = num.sqrt();
    let sd = den.sqrt();
    if &(&sn * &sn) == num && &(&sd * &sd) == den {
        Some(Rat::new(
            BigInt::from_biguint(Sign::Plus, sn),
            BigInt::from_biguint(Sign::Plus, sd),
        ))
    } else {
        None
    }
}

/// gcd-style least common multiple of two positive integers.
pub fn lcm_uint(a: &BigUint, b: &BigUint) -> BigUint {
    a.lcm(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_roundtrip() {
        for s in ["3/4", "-7/2", "5", "0", "-12"] {
            let r = rat_from_str(s).unwrap();
            assert_eq!(rat_from_str(&rat_to_string(&r)).unwrap(), r);
        }
        assert!(rat_from_str("1/0").is_none());
        assert_eq!(rat_from_str("6/8").unwrap(), rat(3, 4));
    }

    #[test]
    fn mod1_and_distance() {
        assert_eq!(mod1(&rat(7, 4)), rat(3, 4));
        assert_eq!(mod1(&rat(-1, 4)), rat(3, 4));
        assert_eq!(circle_dist(&rat(1, 8), &rat(7, 8)), rat(1, 4));
        assert_eq!(circle_dist(&rat(0, 1), &rat(1, 2)), rat(1, 2));
    }

    #[test]
    fn exact_sqrt() {
        assert_eq!(sqrt_exact(&rat(4, 1)), Some(rat(2, 1)));
        assert_eq!(sqrt_exact(&rat(9, 4)), Some(rat(3, 2)));
        assert_eq!(sqrt_exact(&rat(2, 1)), None);
    }
}
