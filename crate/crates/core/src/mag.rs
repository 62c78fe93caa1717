//! Exact scaled-rational arithmetic: values of the form `coeff · base^exp`
//! with a big-integer exponent.
//!
//! The inductive scheduling of rotation numbers produces denominators far too
//! large to materialize (powers like `B^{k!}`), while every inequality that
//! gates the construction must still be decided exactly. Keeping the huge
//! power factored out makes products, integer powers and comparisons exact at
//! any scale; materialization happens only when the exponent gap is small.

use crate::rat::{digits, Rat};
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;
use std::fmt;

/// Exponent gap below which comparisons materialize `base^|Δ|` exactly.
const MATERIALIZE_EXP_LIMIT: u64 = 1 << 20;

/// Signed exact value `coeff · base^exp` (zero iff `coeff` is zero).
#[derive(Clone, Debug, PartialEq)]
pub struct Mag {
    pub coeff: Rat,
    pub exp: BigInt,
    pub base: u32,
}

fn base_pow(base: u32, e: &BigInt) -> Rat {
    let mag = BigUint::from(base).pow(e.magnitude().to_u32().expect("exponent too large to materialize"));
    let mag = BigInt::from(mag);
    if e.is_negative() {
        Rat::new(BigInt::one(), mag)
    } else {
        Rat::from_integer(mag)
    }
}

/// Rational enclosure of log2(base), scaled by 2^40.
fn log2_base_scaled(base: u32) -> (i64, i64) {
    let l = (base as f64).log2() * (1u64 << 40) as f64;
    (l as i64 - 4, l as i64 + 4)
}

impl Mag {
    pub fn new(coeff: Rat, base: u32, exp: BigInt) -> Self {
        assert!(base >= 2);
        if coeff.is_zero() {
            return Mag { coeff, exp: BigInt::zero(), base };
        }
        Mag { coeff, exp, base }
    }

    pub fn from_rat(r: &Rat, base: u32) -> Self {
        Mag::new(r.clone(), base, BigInt::zero())
    }

    pub fn from_u64(n: u64, base: u32) -> Self {
        Mag::from_rat(&Rat::from_integer(BigInt::from(n)), base)
    }

    pub fn one(base: u32) -> Self {
        Mag::from_u64(1, base)
    }

    pub fn zero(base: u32) -> Self {
        Mag::new(Rat::zero(), base, BigInt::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.coeff.is_positive()
    }

    /// `base^e` for a possibly huge exponent.
    pub fn power_of_base(base: u32, exp: BigInt) -> Self {
        Mag::new(Rat::one(), base, exp)
    }

    pub fn mul(&self, other: &Mag) -> Mag {
        assert_eq!(self.base, other.base, "mixed-base arithmetic");
        if self.is_zero() || other.is_zero() {
            return Mag::zero(self.base);
        }
        Mag::new(&self.coeff * &other.coeff, self.base, &self.exp + &other.exp)
    }

    pub fn div(&self, other: &Mag) -> Mag {
        assert_eq!(self.base, other.base, "mixed-base arithmetic");
        assert!(!other.is_zero(), "division by zero Mag");
        if self.is_zero() {
            return Mag::zero(self.base);
        }
        Mag::new(&self.coeff / &other.coeff, self.base, &self.exp - &other.exp)
    }

    pub fn recip(&self) -> Mag {
        Mag::one(self.base).div(self)
    }

    pub fn neg(&self) -> Mag {
        Mag::new(-self.coeff.clone(), self.base, self.exp.clone())
    }

    pub fn abs(&self) -> Mag {
        Mag::new(self.coeff.abs(), self.base, self.exp.clone())
    }

    pub fn pow_i64(&self, k: i64) -> Mag {
        if k == 0 {
            return Mag::one(self.base);
        }
        let kk = k.unsigned_abs() as i32;
        let c = if kk <= 4096 {
            self.coeff.pow(kk)
        } else {
            // repeated squaring keeps intermediate sizes sane
            let mut acc = Rat::one();
            let mut b = self.coeff.clone();
            let mut e = kk as u64;
            while e > 0 {
                if e & 1 == 1 {
                    acc *= &b;
                }
                e >>= 1;
                if e > 0 {
                    b = &b * &b;
                }
            }
            acc
        };
        let m = Mag::new(c, self.base, &self.exp * BigInt::from(k.unsigned_abs()));
        if k < 0 {
            m.recip()
        } else {
            m
        }
    }

    /// Multiplies by `base^e`.
    pub fn shift(&self, e: &BigInt) -> Mag {
        if self.is_zero() {
            return self.clone();
        }
        Mag::new(self.coeff.clone(), self.base, &self.exp + e)
    }

    /// Certified enclosure of log2|v|, as integers.
    fn log2_bounds(&self) -> (BigInt, BigInt) {
        assert!(!self.is_zero());
        let p = self.coeff.numer().magnitude().bits() as i64;
        let q = self.coeff.denom().magnitude().bits() as i64;
        let (lb_lo, lb_hi) = log2_base_scaled(self.base);
        let scale = BigInt::from(1u64 << 40);
        let term = |l: i64| -> BigInt {
            let prod = &self.exp * BigInt::from(l);
            // floor division by 2^40
            let (d, r) = num_integer::Integer::div_rem(&prod, &scale);
            if r.is_negative() {
                d - 1
            } else {
                d
            }
        };
        let (e_lo, e_hi) = if self.exp.is_negative() {
            (term(lb_hi), term(lb_lo) + 1)
        } else {
            (term(lb_lo), term(lb_hi) + 1)
        };
        (e_lo + BigInt::from(p - q - 1), e_hi + BigInt::from(p - q + 1))
    }

    /// Exact comparison. Materializes the base power only when the exponent
    /// gap is small enough that log bounds cannot decide.
    pub fn cmp(&self, other: &Mag) -> Ordering {
        assert_eq!(self.base, other.base, "mixed-base arithmetic");
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => {
                return if other.is_positive() { Ordering::Less } else { Ordering::Greater }
            }
            (false, true) => {
                return if self.is_positive() { Ordering::Greater } else { Ordering::Less }
            }
            _ => {}
        }
        match (self.is_positive(), other.is_positive()) {
            (true, false) => return Ordering::Greater,
            (false, true) => return Ordering::Less,
            _ => {}
        }
        let flip = !self.is_positive();
        let a = self.abs();
        let b = other.abs();
        let (alo, ahi) = a.log2_bounds();
        let (blo, bhi) = b.log2_bounds();
        let ord = if alo > bhi {
            Ordering::Greater
        } else if ahi < blo {
            Ordering::Less
        } else {
            // exponent gap is materializable here
            let delta = &a.exp - &b.exp;
            assert!(
                delta.magnitude().bits() <= 64 && delta.magnitude().to_u64().unwrap() <= MATERIALIZE_EXP_LIMIT,
                "Mag comparison would need an enormous materialization"
            );
            let lhs = &a.coeff * base_pow(a.base, &delta);
            lhs.cmp(&b.coeff)
        };
        if flip {
            ord.reverse()
        } else {
            ord
        }
    }

    pub fn lt(&self, other: &Mag) -> bool {
        self.cmp(other) == Ordering::Less
    }

    pub fn le(&self, other: &Mag) -> bool {
        self.cmp(other) != Ordering::Greater
    }

    /// Exact sum when the exponent gap is materializable.
    pub fn try_add_exact(&self, other: &Mag) -> Option<Mag> {
        assert_eq!(self.base, other.base);
        if self.is_zero() {
            return Some(other.clone());
        }
        if other.is_zero() {
            return Some(self.clone());
        }
        let delta = &self.exp - &other.exp;
        if delta.magnitude().bits() > 32 {
            return None;
        }
        let d = delta.magnitude().to_u64().unwrap();
        if d > 100_000 {
            return None;
        }
        // rebase onto the smaller exponent
        let (lo_exp, a, b) = if delta.is_negative() {
            (self.exp.clone(), self.coeff.clone(), &other.coeff * base_pow(self.base, &-delta))
        } else {
            (other.exp.clone(), &self.coeff * base_pow(self.base, &delta), other.coeff.clone())
        };
        Some(Mag::new(a + b, self.base, lo_exp))
    }

    /// Upper bound for the sum, exact when materializable. Requires both
    /// operands nonnegative.
    pub fn add_upper(&self, other: &Mag) -> Mag {
        assert!(!self.coeff.is_negative() && !other.coeff.is_negative());
        if let Some(s) = self.try_add_exact(other) {
            return s;
        }
        let big = if self.cmp(other) == Ordering::Less { other } else { self };
        // the smaller term is below base^-100000 of the larger; doubling covers it
        Mag::new(&big.coeff * Rat::from_integer(BigInt::from(2)), big.base, big.exp.clone())
    }

    /// Decimal scientific approximation for reports.
    pub fn to_sci_string(&self) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let (lo, hi) = self.abs().log2_bounds();
        let mid: BigInt = (&lo + &hi) / 2;
        let log10 = mid.to_f64().unwrap_or(0.0) * std::f64::consts::LN_2 / std::f64::consts::LN_10;
        let sign = if self.is_positive() { "" } else { "-" };
        // mantissa from the fractional part of log10
        let frac = log10 - log10.floor();
        let mant = 10f64.powf(frac);
        format!("{}{:.3}e{}", sign, mant, log10.floor() as i64)
    }

    pub fn to_f64_checked(&self) -> Option<f64> {
        if self.is_zero() {
            return Some(0.0);
        }
        let (lo, hi) = self.abs().log2_bounds();
        if hi.to_i64()? > 1000 || lo.to_i64()? < -1000 {
            return None;
        }
        let e = self.exp.to_i64()?;
        let c = self.coeff.numer().to_f64()? / self.coeff.denom().to_f64()?;
        Some(c * (self.base as f64).powi(e as i32))
    }
}

impl fmt::Display for Mag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp.is_zero() {
            write!(f, "{}", crate::rat::rat_to_string(&self.coeff))
        } else {
            write!(
                f,
                "{}*{}^{}",
                crate::rat::rat_to_string(&self.coeff),
                self.base,
                self.exp
            )
        }
    }
}

impl Mag {
    /// Fast approximate log2 of |v| (routing decisions only, not proofs).
    pub fn log2_hint(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        let (lo, hi) = self.abs().log2_bounds();
        let mid: BigInt = (&lo + &hi) / 2;
        mid.to_f64().unwrap_or(f64::MAX / 4.0)
    }

    /// Materializes the value as an exact rational (asserts the exponent is
    /// small enough to expand).
    pub fn coeff_times_pow(&self) -> Rat {
        if self.is_zero() {
            return Rat::zero();
        }
        &self.coeff * base_pow(self.base, &self.exp)
    }
}

/// Positive integer `coeff · base^exp`, used for lift orders and denominators
/// that may exceed any materializable size.
#[derive(Clone, Debug, PartialEq)]
pub struct HugeInt {
    pub coeff: BigUint,
    pub base: u32,
    pub exp: BigUint,
}

impl HugeInt {
    pub fn from_uint(n: BigUint, base: u32) -> Self {
        assert!(!n.is_zero());
        HugeInt { coeff: n, base, exp: BigUint::zero() }
    }

    pub fn from_u64(n: u64, base: u32) -> Self {
        HugeInt::from_uint(BigUint::from(n), base)
    }

    pub fn power(base: u32, exp: BigUint) -> Self {
        HugeInt { coeff: BigUint::one(), base, exp }
    }

    pub fn one(base: u32) -> Self {
        HugeInt::from_u64(1, base)
    }

    pub fn is_one(&self) -> bool {
        self.coeff.is_one() && self.exp.is_zero()
    }

    pub fn mul_uint(&self, n: &BigUint) -> HugeInt {
        HugeInt { coeff: &self.coeff * n, base: self.base, exp: self.exp.clone() }
    }

    pub fn mul(&self, other: &HugeInt) -> HugeInt {
        assert_eq!(self.base, other.base);
        HugeInt {
            coeff: &self.coeff * &other.coeff,
            base: self.base,
            exp: &self.exp + &other.exp,
        }
    }

    /// Value modulo `m`, via modular exponentiation of the base.
    pub fn mod_uint(&self, m: &BigUint) -> BigUint {
        if m.is_one() {
            return BigUint::zero();
        }
        let bp = BigUint::from(self.base).modpow(&self.exp, m);
        (&self.coeff % m) * bp % m
    }

    /// True when `d` divides the value.
    pub fn divisible_by(&self, d: &BigUint) -> bool {
        self.mod_uint(d).is_zero()
    }

    /// Fractional part of `self · x` on the circle, exact at any scale.
    pub fn mul_rat_mod1(&self, x: &Rat) -> Rat {
        let den = x.denom().magnitude();
        let num_mod = self.mod_uint(den) * x.numer().magnitude() % den;
        let r = Rat::new(BigInt::from(num_mod), BigInt::from(den.clone()));
        if x.is_negative() && !r.is_zero() {
            Rat::one() - r
        } else {
            r
        }
    }

    /// Materializes when the exponent is small enough.
    pub fn to_uint(&self, max_bits: u64) -> Option<BigUint> {
        let (_, hi) = self.to_mag().log2_bounds();
        if hi.to_u64()? > max_bits {
            return None;
        }
        let e = self.exp.to_u32()?;
        Some(&self.coeff * BigUint::from(self.base).pow(e))
    }

    pub fn to_mag(&self) -> Mag {
        Mag::new(
            Rat::from_integer(BigInt::from(self.coeff.clone())),
            self.base,
            BigInt::from(self.exp.clone()),
        )
    }

    pub fn cmp(&self, other: &HugeInt) -> Ordering {
        self.to_mag().cmp(&other.to_mag())
    }

    /// Approximate decimal digit count (exact up to ±1).
    pub fn digits_approx(&self) -> f64 {
        let e = self.exp.to_f64().unwrap_or(f64::MAX / 64.0);
        e * (self.base as f64).log10() + digits(&self.coeff) as f64
    }
}

impl HugeInt {
    /// Float value at the given precision (asserts materializable size).
    pub fn to_hp(&self, prec: u32) -> crate::hp::Hp {
        crate::hp::Hp::from_rat(&self.to_mag().coeff_times_pow(), prec)
    }
}

impl fmt::Display for HugeInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp.is_zero() {
            write!(f, "{}", self.coeff)
        } else if self.coeff.is_one() {
            write!(f, "{}^{}", self.base, self.exp)
        } else {
            write!(f, "{}*{}^{}", self.coeff, self.base, self.exp)
        }
    }
}

/// k! as a big integer.
pub fn factorial(k: u32) -> BigUint {
    let mut f = BigUint::one();
    for i in 2..=k {
        f *= BigUint::from(i);
    }
    f
}

/// Bits needed to materialize `base^exp` (approximate, round up).
fn pow_bits(base: u32, exp: &BigUint) -> f64 {
    exp.to_f64().unwrap_or(f64::MAX / 64.0) * (base as f64).log2() + 8.0
}

/// A rotation angle with possibly non-materializable denominator.
///
/// `FactorialTail { base, k }` denotes the truncation `Σ_{j=1..k} base^{-j!}`
/// of the factorial series, whose denominator `base^{k!}` can be far beyond
/// any expandable integer; arithmetic on it stays structural.
#[derive(Clone, Debug, PartialEq)]
pub enum Alpha {
    Plain(Rat),
    FactorialTail { base: u32, k: u32 },
}

/// Materialization ceiling for structural angles, in bits.
pub const ALPHA_MATERIALIZE_BITS: f64 = 2_000_000.0;

impl Alpha {
    pub fn denominator(&self) -> HugeInt {
        match self {
            Alpha::Plain(r) => {
                // angle denominators are positive by construction
                HugeInt::from_uint(r.denom().magnitude().clone(), 10)
            }
            Alpha::FactorialTail { base, k } => HugeInt::power(*base, factorial(*k)),
        }
    }

    /// Exact rational value when the denominator is expandable.
    pub fn to_plain_rat(&self) -> Option<Rat> {
        match self {
            Alpha::Plain(r) => Some(r.clone()),
            Alpha::FactorialTail { base, k } => {
                let kf = factorial(*k);
                if pow_bits(*base, &kf) > ALPHA_MATERIALIZE_BITS {
                    return None;
                }
                Some(self.partial_sum(*k))
            }
        }
    }

    /// `Σ_{j=1..min(k,jmax)} base^{-j!}` as an exact rational.
    pub fn partial_sum(&self, jmax: u32) -> Rat {
        match self {
            Alpha::Plain(r) => r.clone(),
            Alpha::FactorialTail { base, k } => {
                let mut acc = Rat::zero();
                for j in 1..=(*k).min(jmax) {
                    let e = factorial(j);
                    assert!(
                        pow_bits(*base, &e) <= ALPHA_MATERIALIZE_BITS,
                        "partial sum term too large to materialize"
                    );
                    let den = BigUint::from(*base).pow(e.to_u32().unwrap());
                    acc += Rat::new(BigInt::one(), BigInt::from(den));
                }
                acc
            }
        }
    }

    /// For the factorial form: `(number of terms kept, certified upper bound
    /// on the dropped tail Σ_{j>jmax} base^{-j!})` — the bound `2·B^{-(jmax+1)!}`.
    pub fn tail_bound_above(&self, jmax: u32) -> Mag {
        match self {
            Alpha::Plain(_) => Mag::zero(10),
            Alpha::FactorialTail { base, k } => {
                if jmax >= *k {
                    return Mag::zero(*base);
                }
                let e = factorial(jmax + 1);
                Mag::new(Rat::from_integer(BigInt::from(2)), *base, -BigInt::from(e))
            }
        }
    }

    pub fn value_hp(&self, prec: u32) -> crate::hp::Hp {
        match self {
            Alpha::Plain(r) => crate::hp::Hp::from_rat(r, prec),
            Alpha::FactorialTail { base, k } => {
                let lb = (*base as f64).log2();
                let mut acc = crate::hp::Hp::zero();
                for j in 1..=*k {
                    let e = factorial(j);
                    if e.to_f64().unwrap_or(f64::MAX) * lb > prec as f64 + 64.0 {
                        break;
                    }
                    let den = BigUint::from(*base).pow(e.to_u32().unwrap());
                    acc = acc.add(
                        &crate::hp::Hp::from_rat(&Rat::new(BigInt::one(), BigInt::from(den)), prec + 32),
                        prec + 32,
                    );
                }
                acc.round(prec)
            }
        }
    }

    /// `n·α mod 1` when it stays expandable (always when it is an integer).
    pub fn times_huge_mod1(&self, n: &HugeInt) -> Option<Rat> {
        match self {
            Alpha::Plain(r) => Some(n.mul_rat_mod1(r)),
            Alpha::FactorialTail { base, k } => {
                assert_eq!(n.base, *base, "cover order and angle use different bases");
                let mut acc = Rat::zero();
                for j in 1..=*k {
                    let jf = factorial(j);
                    if n.exp >= jf {
                        continue; // integer contribution
                    }
                    let gap = &jf - &n.exp;
                    if pow_bits(*base, &gap) > ALPHA_MATERIALIZE_BITS {
                        return None;
                    }
                    let den = BigUint::from(*base).pow(gap.to_u32().unwrap());
                    let num = &n.coeff % &den;
                    acc += Rat::new(BigInt::from(num), BigInt::from(den));
                }
                Some(crate::rat::mod1(&acc))
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Alpha::Plain(r) => crate::rat::rat_to_string(r),
            Alpha::FactorialTail { base, k } => format!("factorial_tail(base={base},k={k})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat;

    #[test]
    fn mag_compare_materializable() {
        let a = Mag::new(rat(3, 2), 10, BigInt::from(5));
        let b = Mag::new(rat(149999, 1), 10, BigInt::from(0));
        assert_eq!(a.cmp(&b), Ordering::Greater);
        let c = Mag::new(rat(150001, 1), 10, BigInt::from(0));
        assert_eq!(a.cmp(&c), Ordering::Less);
    }

    #[test]
    fn mag_compare_huge_gap() {
        // 10^(10^30) vs 7 · 10^5 — decided by log bounds alone
        let big = Mag::power_of_base(10, BigInt::from(10u64).pow(30u32.into()));
        let small = Mag::new(rat(7, 1), 10, BigInt::from(5));
        assert_eq!(big.cmp(&small), Ordering::Greater);
        assert_eq!(small.cmp(&big), Ordering::Less);
        assert_eq!(big.recip().cmp(&small), Ordering::Less);
    }

    #[test]
    fn mag_pow_and_mul() {
        let a = Mag::new(rat(2, 3), 10, BigInt::from(7));
        let sq = a.mul(&a);
        assert_eq!(sq, a.pow_i64(2));
        assert_eq!(a.pow_i64(-1).mul(&a), Mag::one(10));
    }

    #[test]
    fn huge_mod_matches_direct() {
        // 3 · 10^20 mod 7 — cross-check against materialized arithmetic
        let h = HugeInt { coeff: BigUint::from(3u32), base: 10, exp: BigUint::from(20u32) };
        let direct = (BigUint::from(3u32) * BigUint::from(10u32).pow(20u32)) % BigUint::from(7u32);
        assert_eq!(h.mod_uint(&BigUint::from(7u32)), direct);
        let x = rat(5, 7);
        let full = h.to_uint(1000).unwrap();
        let expect = crate::rat::mod1(&(Rat::from_integer(BigInt::from(full)) * &x));
        assert_eq!(h.mul_rat_mod1(&x), expect);
    }

    #[test]
    fn huge_divisibility() {
        // base^k! style value divisible by smaller powers
        let h = HugeInt::power(10, BigUint::from(720u32)).mul_uint(&BigUint::from(300u32));
        assert!(h.divisible_by(&BigUint::from(1000u32)));
        assert!(h.divisible_by(&BigUint::from(3u32)));
        assert!(!h.divisible_by(&BigUint::from(7u32)));
    }

    #[test]
    fn mag_add_exact() {
        let a = Mag::new(rat(1, 1), 10, BigInt::from(-6));
        let b = Mag::new(rat(2, 1), 10, BigInt::from(-7));
        let s = a.try_add_exact(&b).unwrap();
        assert_eq!(s.cmp(&Mag::new(rat(12, 10), 10, BigInt::from(-6))), Ordering::Equal);
    }
}
