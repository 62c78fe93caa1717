//! The C^∞ transition profile used by all smoothing joins.
//!
//! `phi(t) = psi(t) / (psi(t) + psi(1-t))` with `psi(t) = exp(-1/t)` rises
//! monotonically from 0 to 1 on [0,1] with all derivatives vanishing at both
//! ends, so a join whose derivative is `s_in + (s_out-s_in)·phi` meets its
//! neighbouring affine pieces with flat contact. The symmetry
//! `phi(t) + phi(1-t) = 1` gives the integral over [0,1] the exact value 1/2,
//! which is what keeps join increments rational.
//!
//! The antiderivative `PHI(t) = ∫_0^t phi` has no closed form; it is computed
//! by Gauss–Legendre quadrature over a geometrically graded cell table,
//! cached per working precision.

use crate::hp::Hp;
use crate::jet::Jet;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

const GL_ORDER: usize = 40;
const CELLS_PER_OCTAVE: i64 = 4;
/// Maximum derivative order tracked for the profile.
pub const MAX_PROFILE_DERIV: usize = 8;

/// Cheap f64 model of the profile, for seeding iterative solvers.
pub fn phi_f64(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Cheap f64 model of the antiderivative (composite Simpson).
pub fn phi_int_f64(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let t = t.min(1.0);
    let n = 256;
    let h = t / n as f64;
    let mut s = phi_f64(0.0) + phi_f64(t);
    for i in 1..n {
        s += phi_f64(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// psi(t) = exp(-1/t) for t > 0, 0 otherwise.
pub fn psi(t: &Hp, prec: u32) -> Hp {
    if t.is_zero() || t.is_negative() {
        return Hp::zero();
    }
    t.recip(prec).neg().exp(prec)
}

/// The transition profile on [0,1]; clamps to 0/1 outside.
pub fn phi(t: &Hp, prec: u32) -> Hp {
    if t.is_zero() || t.is_negative() {
        return Hp::zero();
    }
    if Hp::one().cmp(t) != std::cmp::Ordering::Greater {
        return Hp::one();
    }
    let a = psi(t, prec);
    if a.is_zero() {
        return Hp::zero();
    }
    let b = psi(&Hp::one().sub(t, prec), prec);
    if b.is_zero() {
        return Hp::one();
    }
    a.div(&a.add(&b, prec), prec)
}

/// Jet of the profile at an interior point (constant off [0,1]).
pub fn phi_jet(t0: &Hp, order: usize, prec: u32) -> Jet {
    if t0.is_zero() || t0.is_negative() {
        return Jet::constant(Hp::zero(), order);
    }
    if Hp::one().cmp(t0) != std::cmp::Ordering::Greater {
        return Jet::constant(Hp::one(), order);
    }
    let t = Jet::variable(t0.clone(), order);
    let a = t.recip(prec).neg().exp(prec);
    if a.value().is_zero() {
        return Jet::constant(Hp::zero(), order);
    }
    let one_minus = Jet::constant(Hp::one(), order).sub(&t, prec);
    let b = one_minus.recip(prec).neg().exp(prec);
    if b.value().is_zero() {
        return Jet::constant(Hp::one(), order);
    }
    a.div(&a.add(&b, prec), prec)
}

struct GlRule {
    nodes: Vec<Hp>,
    weights: Vec<Hp>,
}

fn legendre_pair(x: &Hp, n: usize, wp: u32) -> (Hp, Hp) {
    let mut p0 = Hp::one();
    let mut p1 = x.clone();
    for k in 1..n {
        let a = x.mul(&p1, wp).mul(&Hp::from_i64((2 * k + 1) as i64), wp);
        let b = p0.mul(&Hp::from_i64(k as i64), wp);
        let p2 = a.sub(&b, wp).div(&Hp::from_i64((k + 1) as i64), wp);
        p0 = p1;
        p1 = p2;
    }
    (p1, p0) // (P_n, P_{n-1})
}

fn legendre_rule(n: usize, prec: u32) -> GlRule {
    let wp = prec + 32;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 1..=n {
        let seed = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut x = Hp::from_f64(seed);
        for _ in 0..80 {
            let (pn, pnm1) = legendre_pair(&x, n, wp);
            // P'_n = n (x P_n − P_{n−1}) / (x² − 1)
            let num = x.mul(&pn, wp).sub(&pnm1, wp).mul(&Hp::from_i64(n as i64), wp);
            let den = x.mul(&x, wp).sub(&Hp::one(), wp);
            let dp = num.div(&den, wp);
            let step = pn.div(&dp, wp);
            x = x.sub(&step, wp);
            if step.is_zero() || step.abs().to_f64() < 2f64.powi(-((wp as i32) - 8)) {
                break;
            }
        }
        let (pn, pnm1) = legendre_pair(&x, n, wp);
        let _ = pn;
        let num = x.mul(&legendre_pair(&x, n, wp).0, wp).sub(&pnm1, wp).mul(&Hp::from_i64(n as i64), wp);
        let den = x.mul(&x, wp).sub(&Hp::one(), wp);
        let dp = num.div(&den, wp);
        let om = Hp::one().sub(&x.mul(&x, wp), wp);
        let w = Hp::from_i64(2).div(&om.mul(&dp.mul(&dp, wp), wp), wp);
        nodes.push(x.round(prec));
        weights.push(w.round(prec));
    }
    GlRule { nodes, weights }
}

fn gl_integrate(rule: &GlRule, lo: &Hp, hi: &Hp, prec: u32, f: impl Fn(&Hp) -> Hp) -> Hp {
    let half = hi.sub(lo, prec).mul_pow2(-1);
    let mid = hi.add(lo, prec).mul_pow2(-1);
    let mut acc = Hp::zero();
    for (x, w) in rule.nodes.iter().zip(rule.weights.iter()) {
        let t = mid.add(&half.mul(x, prec), prec);
        acc = acc.add(&w.mul(&f(&t), prec), prec);
    }
    acc.mul(&half, prec)
}

struct PhiData {
    prec: u32,
    rule: GlRule,
    bounds: Vec<Hp>,
    cum: Vec<Hp>,
    deriv_sup: Vec<Hp>,
}

impl PhiData {
    fn build(prec: u32) -> PhiData {
        let wp = prec + 32;
        let rule = legendre_rule(GL_ORDER, wp);
        // flat cutoff: psi below the precision floor left of 2^-k_flat
        let k_flat = (((prec + 128) as f64) * std::f64::consts::LN_2).log2().ceil() as i64 + 1;
        let mut bounds = vec![Hp::one().mul_pow2(-k_flat)];
        let mut k = k_flat;
        while k > 1 {
            // boundaries (C+j)/C · 2^-k for j = 1..C land on 2^-(k-1)
            for j in 1..=CELLS_PER_OCTAVE {
                let b = Hp::from_i64(CELLS_PER_OCTAVE + j)
                    .mul(&Hp::from_i64(CELLS_PER_OCTAVE).recip(wp), wp)
                    .mul_pow2(-k);
                bounds.push(b.round(wp));
            }
            k -= 1;
        }
        let mut cum = vec![Hp::zero(); bounds.len()];
        for i in 1..bounds.len() {
            let seg = gl_integrate(&rule, &bounds[i - 1], &bounds[i], wp, |t| phi(t, wp));
            cum[i] = cum[i - 1].add(&seg, wp);
        }
        // derivative sups by jet sampling, refined around the argmax
        let mut deriv_sup = vec![Hp::zero(); MAX_PROFILE_DERIV + 1];
        deriv_sup[0] = Hp::one();
        let coarse = 512;
        let mut best_t = vec![0.5f64; MAX_PROFILE_DERIV + 1];
        for i in 1..coarse {
            let t = Hp::from_f64(i as f64 / coarse as f64);
            let j = phi_jet(&t, MAX_PROFILE_DERIV, 128);
            for kk in 1..=MAX_PROFILE_DERIV {
                let v = j.deriv(kk, 128).abs();
                if deriv_sup[kk].lt(&v) {
                    deriv_sup[kk] = v;
                    best_t[kk] = i as f64 / coarse as f64;
                }
            }
        }
        for kk in 1..=MAX_PROFILE_DERIV {
            let mut lo = best_t[kk] - 1.5 / coarse as f64;
            let mut hi = best_t[kk] + 1.5 / coarse as f64;
            for _ in 0..4 {
                let n = 32;
                let mut bt = lo;
                let mut bv = Hp::zero();
                for i in 0..=n {
                    let tf = lo + (hi - lo) * i as f64 / n as f64;
                    let j = phi_jet(&Hp::from_f64(tf), kk, 160);
                    let v = j.deriv(kk, 160).abs();
                    if bv.lt(&v) {
                        bv = v;
                        bt = tf;
                    }
                }
                let w = (hi - lo) / n as f64;
                lo = bt - 1.5 * w;
                hi = bt + 1.5 * w;
                if deriv_sup[kk].lt(&bv) {
                    deriv_sup[kk] = bv;
                }
            }
        }
        PhiData { prec, rule, bounds, cum, deriv_sup }
    }

    fn phi_int_half(&self, t: &Hp) -> Hp {
        // t in [0, 1/2]
        let wp = self.prec + 32;
        if t.cmp(&self.bounds[0]) != std::cmp::Ordering::Greater {
            return Hp::zero();
        }
        let mut idx = self.bounds.len() - 1;
        for i in 1..self.bounds.len() {
            if t.cmp(&self.bounds[i]) != std::cmp::Ordering::Greater {
                idx = i;
                break;
            }
        }
        let part = gl_integrate(&self.rule, &self.bounds[idx - 1], t, wp, |u| phi(u, wp));
        self.cum[idx - 1].add(&part, wp).round(self.prec)
    }
}

fn phi_cache() -> &'static Mutex<HashMap<u32, Arc<PhiData>>> {
    static CACHE: OnceLock<Mutex<HashMap<u32, Arc<PhiData>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn phi_data(prec: u32) -> Arc<PhiData> {
    let mut guard = phi_cache().lock().unwrap();
    guard.entry(prec).or_insert_with(|| Arc::new(PhiData::build(prec))).clone()
}

/// PHI(t) = ∫_0^t phi, clamped outside [0,1].
pub fn phi_int(t: &Hp, prec: u32) -> Hp {
    let data = phi_data(prec);
    if t.is_zero() || t.is_negative() {
        return Hp::zero();
    }
    let one = Hp::one();
    if t.cmp(&one) != std::cmp::Ordering::Less {
        return Hp::one().mul_pow2(-1);
    }
    let half = Hp::one().mul_pow2(-1);
    if t.cmp(&half) != std::cmp::Ordering::Greater {
        data.phi_int_half(t)
    } else {
        // PHI(t) = t − 1/2 + PHI(1−t)
        let r = one.sub(t, prec);
        t.sub(&half, prec).add(&data.phi_int_half(&r), prec)
    }
}

/// sup over [0,1] of |phi^(k)|.
pub fn phi_deriv_sup(k: usize, prec: u32) -> Hp {
    assert!(k <= MAX_PROFILE_DERIV);
    if k == 0 {
        return Hp::one();
    }
    phi_data(prec).deriv_sup[k].clone()
}

/// sup over t in [0,1] of |a + b·t + c·PHI(t)|.
///
/// The derivative `b + c·phi` is monotone in t, so the supremum is attained
/// at an endpoint or at the single interior critical point.
pub fn sup_affine_plus_phi_int(a: &Hp, b: &Hp, c: &Hp, prec: u32) -> Hp {
    let eval = |t: &Hp| -> Hp {
        a.add(&b.mul(t, prec), prec).add(&c.mul(&phi_int(t, prec), prec), prec).abs()
    };
    let mut best = eval(&Hp::zero());
    let at_one = eval(&Hp::one());
    if best.lt(&at_one) {
        best = at_one;
    }
    if !c.is_zero() {
        let target = b.neg().div(c, prec);
        let in_range = !target.is_negative()
            && !target.is_zero()
            && target.cmp(&Hp::one()) == std::cmp::Ordering::Less;
        if !in_range {
            return best;
        }
        let mut lo = Hp::zero();
        let mut hi = Hp::one();
        for _ in 0..(prec as usize / 2 + 16) {
            let mid = lo.add(&hi, prec).mul_pow2(-1);
            if phi(&mid, prec).cmp(&target) == std::cmp::Ordering::Less {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let interior = eval(&lo);
        if best.lt(&interior) {
            best = interior;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: u32 = 256;

    #[test]
    fn profile_symmetry_and_midpoint() {
        let half = Hp::from_f64(0.5);
        assert!((phi(&half, P).to_f64() - 0.5).abs() < 1e-40);
        for tf in [0.1, 0.23, 0.42, 0.77] {
            let t = Hp::from_f64(tf);
            let s = phi(&t, P).add(&phi(&Hp::one().sub(&t, P), P), P);
            let d = s.sub(&Hp::one(), P).abs();
            assert!(d.to_f64() < 1e-50, "t={tf}: {}", d.to_f64());
        }
        // flat ends
        assert!(phi(&Hp::from_f64(1e-4), P).is_zero());
        assert!((phi(&Hp::from_f64(0.9999), P).to_f64() - 1.0).abs() < 1e-60);
    }

    #[test]
    fn integral_against_simpson() {
        let simpson = |t: f64| -> f64 {
            let n = 20_000;
            let h = t / n as f64;
            let pf = |x: f64| -> f64 {
                if x <= 0.0 {
                    return 0.0;
                }
                if x >= 1.0 {
                    return 1.0;
                }
                let a = (-1.0 / x).exp();
                let b = (-1.0 / (1.0 - x)).exp();
                a / (a + b)
            };
            let mut s = pf(0.0) + pf(t);
            for i in 1..n {
                s += pf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        for tf in [0.2, 0.5, 0.8] {
            let got = phi_int(&Hp::from_f64(tf), P).to_f64();
            let want = simpson(tf);
            assert!((got - want).abs() < 1e-10, "t={tf}: {got} vs {want}");
        }
        // the full integral is exactly 1/2 by symmetry
        assert!((phi_int(&Hp::one(), P).to_f64() - 0.5).abs() < 1e-70);
    }

    #[test]
    fn quadrature_internal_consistency() {
        // PHI(t) + PHI(1−t) = t' − 1/2 + 2·PHI(t) for t' = 1−t, t ≤ 1/2
        let t = Hp::from_f64(0.3);
        let t_hi = Hp::one().sub(&t, P);
        let a = phi_int(&t, P);
        let b = phi_int(&t_hi, P);
        let rhs = t_hi.sub(&Hp::one().mul_pow2(-1), P).add(&a.mul_pow2(1), P);
        let d = a.add(&b, P).sub(&rhs, P);
        assert!(d.abs().to_f64() < 1e-60, "{}", d.abs().to_f64());
    }

    #[test]
    fn deriv_sups_sane() {
        // phi' peaks at 2, attained at t = 1/2
        let s1 = phi_deriv_sup(1, P).to_f64();
        assert!((s1 - 2.0).abs() < 1e-6, "{s1}");
        assert!(phi_deriv_sup(2, P).to_f64() > 4.0);
        assert!(phi_deriv_sup(0, P).to_f64() == 1.0);
    }

    #[test]
    fn affine_plus_integral_sup() {
        let s = sup_affine_plus_phi_int(&Hp::zero(), &Hp::zero(), &Hp::one(), P);
        assert!((s.to_f64() - 0.5).abs() < 1e-30);
        // t − 2·PHI(t): critical point at phi = 1/2, i.e. t = 1/2
        let s2 = sup_affine_plus_phi_int(&Hp::zero(), &Hp::one(), &Hp::from_i64(-2), P);
        let half = Hp::one().mul_pow2(-1);
        let expect = half.sub(&phi_int(&half, P).mul_pow2(1), P).abs();
        let d = s2.sub(&expect, P).abs();
        assert!(d.to_f64() < 1e-30, "{}", d.to_f64());
    }
}
