//! Software binary floating point with arbitrary mantissa precision.
//!
//! Values are `m · 2^e` with a big-integer mantissa. Rounding truncates
//! toward zero after each operation, so each op is accurate to about one unit
//! in the last place; callers leave generous headroom (the default working
//! precision is 256 bits against tolerances no tighter than 1e-12).
//!
//! Only the transcendentals actually needed by the smoothing profile and the
//! estimation layer are provided: `exp`, `ln`, `sqrt`.

use crate::rat::Rat;
use num_bigint::{BigInt, Sign};
use num_traits::{Signed, ToPrimitive, Zero};
use std::cmp::Ordering;

#[derive(Clone, Debug)]
pub struct Hp {
    m: BigInt,
    e: i64,
}

impl Hp {
    pub fn zero() -> Hp {
        Hp { m: BigInt::zero(), e: 0 }
    }

    pub fn one() -> Hp {
        Hp { m: BigInt::from(1), e: 0 }
    }

    pub fn from_i64(n: i64) -> Hp {
        Hp { m: BigInt::from(n), e: 0 }
    }

    pub fn from_bigint(n: BigInt) -> Hp {
        Hp { m: n, e: 0 }
    }

    pub fn is_zero(&self) -> bool {
        self.m.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.m.is_negative()
    }

    fn bits(&self) -> u64 {
        self.m.magnitude().bits()
    }

    /// Truncates the mantissa to `prec` bits.
    pub fn round(mut self, prec: u32) -> Hp {
        let b = self.bits();
        if b > prec as u64 {
            let shift = (b - prec as u64) as i64;
            self.m >>= shift as usize;
            self.e += shift;
        }
        if self.m.is_zero() {
            self.e = 0;
        }
        self
    }

    pub fn from_rat(r: &Rat, prec: u32) -> Hp {
        if r.is_zero() {
            return Hp::zero();
        }
        let nb = r.numer().magnitude().bits() as i64;
        let db = r.denom().magnitude().bits() as i64;
        // scale so the quotient carries ~prec+8 bits
        let s = (prec as i64 + 8 - (nb - db)).max(0);
        let m = (r.numer() << s as usize) / r.denom();
        Hp { m, e: -s }.round(prec)
    }

    pub fn from_f64(x: f64) -> Hp {
        if x == 0.0 {
            return Hp::zero();
        }
        assert!(x.is_finite());
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1i64 } else { 1 };
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), exp - 1075)
        };
        Hp { m: BigInt::from(sign * m as i64), e }
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let b = self.bits();
        let (top, e) = if b > 53 {
            let sh = (b - 53) as i64;
            ((&self.m >> sh as usize).to_f64().unwrap(), self.e + sh)
        } else {
            (self.m.to_f64().unwrap(), self.e)
        };
        if e > 1023 {
            if top > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        } else if e < -1200 {
            0.0
        } else {
            top * 2f64.powi(e as i32)
        }
    }

    /// Exact rational value (the representation is dyadic).
    pub fn to_rat(&self) -> Rat {
        if self.is_zero() {
            return Rat::zero();
        }
        if self.e >= 0 {
            Rat::from_integer(&self.m << self.e as usize)
        } else {
            Rat::new(self.m.clone(), BigInt::from(1) << (-self.e) as usize)
        }
    }

    pub fn neg(&self) -> Hp {
        Hp { m: -self.m.clone(), e: self.e }
    }

    pub fn abs(&self) -> Hp {
        Hp { m: self.m.abs(), e: self.e }
    }

    pub fn mul_pow2(&self, k: i64) -> Hp {
        if self.is_zero() {
            return Hp::zero();
        }
        Hp { m: self.m.clone(), e: self.e + k }
    }

    pub fn add(&self, other: &Hp, prec: u32) -> Hp {
        if self.is_zero() {
            return other.clone().round(prec);
        }
        if other.is_zero() {
            return self.clone().round(prec);
        }
        let (hi, lo) = if self.e + (self.bits() as i64) >= other.e + (other.bits() as i64) {
            (self, other)
        } else {
            (other, self)
        };
        // magnitude gap measured between leading bits; far below the last
        // retained bit the smaller operand cannot matter
        let top_hi = hi.e + hi.bits() as i64;
        let top_lo = lo.e + lo.bits() as i64;
        if top_hi - top_lo > prec as i64 + 64 {
            return hi.clone().round(prec);
        }
        let gap = hi.e - lo.e;
        let m = if gap >= 0 {
            (&hi.m << gap as usize) + &lo.m
        } else {
            &hi.m + (&lo.m << (-gap) as usize)
        };
        let e = hi.e.min(lo.e);
        Hp { m, e }.round(prec)
    }

    pub fn sub(&self, other: &Hp, prec: u32) -> Hp {
        self.add(&other.neg(), prec)
    }

    pub fn mul(&self, other: &Hp, prec: u32) -> Hp {
        if self.is_zero() || other.is_zero() {
            return Hp::zero();
        }
        Hp { m: &self.m * &other.m, e: self.e + other.e }.round(prec)
    }

    pub fn div(&self, other: &Hp, prec: u32) -> Hp {
        assert!(!other.is_zero(), "Hp division by zero");
        if self.is_zero() {
            return Hp::zero();
        }
        let s = prec as i64 + 8 + other.bits() as i64 - self.bits() as i64;
        let s = s.max(0);
        let m = (&self.m << s as usize) / &other.m;
        Hp { m, e: self.e - other.e - s }.round(prec)
    }

    pub fn recip(&self, prec: u32) -> Hp {
        Hp::one().div(self, prec)
    }

    pub fn cmp(&self, other: &Hp) -> Ordering {
        // exact: compare without rounding
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return if other.is_negative() { Ordering::Greater } else { Ordering::Less },
            (false, true) => return if self.is_negative() { Ordering::Less } else { Ordering::Greater },
            _ => {}
        }
        match (self.is_negative(), other.is_negative()) {
            (false, true) => return Ordering::Greater,
            (true, false) => return Ordering::Less,
            _ => {}
        }
        // same sign: compare magnitudes via aligned exponents
        let la = self.e + self.bits() as i64;
        let lb = other.e + other.bits() as i64;
        let mag = if la != lb {
            la.cmp(&lb)
        } else {
            let gap = self.e - other.e;
            if gap >= 0 {
                (&self.m << gap as usize).magnitude().cmp((&other.m).magnitude())
            } else {
                self.m.magnitude().cmp((&other.m << (-gap) as usize).magnitude())
            }
        };
        if self.is_negative() {
            mag.reverse()
        } else {
            mag
        }
    }

    pub fn lt(&self, other: &Hp) -> bool {
        self.cmp(other) == Ordering::Less
    }

    pub fn floor_bigint(&self) -> BigInt {
        if self.is_zero() {
            return BigInt::zero();
        }
        if self.e >= 0 {
            &self.m << self.e as usize
        } else {
            // num-bigint's shr on negatives rounds toward negative infinity
            &self.m >> (-self.e) as usize
        }
    }

    /// Fractional part in [0, 1).
    pub fn frac(&self, prec: u32) -> Hp {
        let f = self.floor_bigint();
        self.sub(&Hp::from_bigint(f), prec)
    }

    pub fn powi(&self, mut k: u64, prec: u32) -> Hp {
        let mut acc = Hp::one();
        let mut b = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&b, prec);
            }
            k >>= 1;
            if k > 0 {
                b = b.mul(&b, prec);
            }
        }
        acc
    }

    /// exp(x). Underflows to exact zero far below the precision floor.
    pub fn exp(&self, prec: u32) -> Hp {
        if self.is_zero() {
            return Hp::one();
        }
        let approx = self.to_f64();
        if approx < -((prec as f64 + 96.0) * std::f64::consts::LN_2) {
            return Hp::zero();
        }
        assert!(
            approx < 1e15,
            "exp argument out of supported range: {approx}"
        );
        // halve until |r| <= 1/4, then Taylor, then square back
        let mag_log = self.e + self.bits() as i64;
        let s = (mag_log + 2).max(0) as u32;
        let wp = prec + s + 48;
        let r = self.mul_pow2(-(s as i64));
        let mut sum = Hp::one();
        let mut term = Hp::one();
        let mut k: u64 = 1;
        loop {
            term = term.mul(&r, wp).div(&Hp::from_i64(k as i64), wp);
            if term.is_zero() || term.e + (term.bits() as i64) < -(wp as i64) {
                break;
            }
            sum = sum.add(&term, wp);
            k += 1;
            assert!(k < 10_000, "exp Taylor failed to converge");
        }
        for _ in 0..s {
            sum = sum.mul(&sum, wp);
        }
        sum.round(prec)
    }

    /// Natural log by Newton iteration on exp, seeded from f64.
    pub fn ln(&self, prec: u32) -> Hp {
        assert!(!self.is_zero() && !self.is_negative(), "ln domain");
        // seed: ln(m) + e·ln2 in f64
        let b = self.bits();
        let top = if b > 53 {
            (&self.m >> (b - 53) as usize).to_f64().unwrap()
        } else {
            self.m.to_f64().unwrap()
        };
        let e_eff = self.e as f64 + if b > 53 { (b - 53) as f64 } else { 0.0 };
        let seed = top.ln() + e_eff * std::f64::consts::LN_2;
        let mut y = Hp::from_f64(seed);
        let mut p: u32 = 64;
        loop {
            p = (p * 2).min(prec + 48);
            // y += x·e^{-y} − 1
            let corr = self.mul(&y.neg().exp(p), p).sub(&Hp::one(), p);
            y = y.add(&corr, p);
            if p >= prec + 48 {
                // one polishing pass at full precision
                let corr = self.mul(&y.neg().exp(p), p).sub(&Hp::one(), p);
                y = y.add(&corr, p);
                break;
            }
        }
        y.round(prec)
    }

    pub fn sqrt(&self, prec: u32) -> Hp {
        assert!(!self.is_negative(), "sqrt domain");
        if self.is_zero() {
            return Hp::zero();
        }
        let target_bits = 2 * (prec as i64 + 8);
        let mut s = target_bits - self.bits() as i64;
        if (self.e - s) % 2 != 0 {
            s += 1;
        }
        let m = if s >= 0 { &self.m << s as usize } else { &self.m >> (-s) as usize };
        let r = m.magnitude().sqrt();
        Hp { m: BigInt::from_biguint(Sign::Plus, r), e: (self.e - s) / 2 }.round(prec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat;

    fn close(a: &Hp, b: f64, tol: f64) {
        assert!((a.to_f64() - b).abs() <= tol, "{} vs {}", a.to_f64(), b);
    }

    #[test]
    fn arithmetic_basics() {
        let p = 128;
        let a = Hp::from_rat(&rat(1, 3), p);
        let b = Hp::from_rat(&rat(1, 6), p);
        close(&a.add(&b, p), 0.5, 1e-15);
        close(&a.mul(&b, p), 1.0 / 18.0, 1e-16);
        close(&a.div(&b, p), 2.0, 1e-15);
        assert_eq!(a.cmp(&b), Ordering::Greater);
        close(&a.sub(&a, p), 0.0, 0.0);
    }

    #[test]
    fn exp_ln_sqrt() {
        let p = 256;
        let one = Hp::one();
        close(&one.exp(p), std::f64::consts::E, 1e-14);
        let x = Hp::from_rat(&rat(7, 2), p);
        let lx = x.ln(p);
        close(&lx.exp(p), 3.5, 1e-13);
        close(&x.sqrt(p), 3.5f64.sqrt(), 1e-14);
        // exp(-40) against f64
        let e40 = Hp::from_i64(-40).exp(p);
        assert!((e40.to_f64() / (-40f64).exp() - 1.0).abs() < 1e-12);
        // deep underflow is exact zero
        assert!(Hp::from_i64(-10_000_000).exp(p).is_zero());
    }

    #[test]
    fn exp_high_precision_self_consistency() {
        // exp(1) at 320 bits vs 256 bits agree to 256 bits
        let a = Hp::one().exp(320);
        let b = Hp::one().exp(256);
        let d = a.sub(&b, 320).abs();
        assert!(d.lt(&Hp::from_f64(1e-70)));
    }

    #[test]
    fn floor_frac() {
        let p = 128;
        let x = Hp::from_rat(&rat(-7, 2), p);
        assert_eq!(x.floor_bigint(), BigInt::from(-4));
        close(&x.frac(p), 0.5, 1e-15);
        let y = Hp::from_rat(&rat(9, 4), p);
        assert_eq!(y.floor_bigint(), BigInt::from(2));
        close(&y.frac(p), 0.25, 1e-15);
    }
}
