//! Truncated Taylor series ("jets") over [`Hp`], used to evaluate higher
//! derivatives of smoothing joins and composition chains without symbolic
//! differentiation.
//!
//! A jet stores Taylor *coefficients* `c[k] = f^(k)(x0)/k!`, which keeps
//! multiplication and composition free of factorial bookkeeping.

use crate::hp::Hp;

#[derive(Clone, Debug)]
pub struct Jet {
    pub c: Vec<Hp>,
}

fn factorial_hp(k: usize) -> Hp {
    let mut f = 1u128;
    for i in 2..=k as u128 {
        f *= i;
    }
    Hp::from_bigint(num_bigint::BigInt::from(f))
}

impl Jet {
    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn constant(v: Hp, order: usize) -> Jet {
        let mut c = vec![Hp::zero(); order + 1];
        c[0] = v;
        Jet { c }
    }

    /// The identity function expanded at `x0`.
    pub fn variable(x0: Hp, order: usize) -> Jet {
        let mut j = Jet::constant(x0, order);
        if order >= 1 {
            j.c[1] = Hp::one();
        }
        j
    }

    pub fn value(&self) -> &Hp {
        &self.c[0]
    }

    /// k-th derivative (`c[k]·k!`).
    pub fn deriv(&self, k: usize, prec: u32) -> Hp {
        if k >= self.c.len() {
            return Hp::zero();
        }
        self.c[k].mul(&factorial_hp(k), prec)
    }

    pub fn add(&self, o: &Jet, prec: u32) -> Jet {
        let n = self.c.len().max(o.c.len());
        let mut c = vec![Hp::zero(); n];
        for (i, ci) in c.iter_mut().enumerate() {
            let a = self.c.get(i).cloned().unwrap_or_else(Hp::zero);
            let b = o.c.get(i).cloned().unwrap_or_else(Hp::zero);
            *ci = a.add(&b, prec);
        }
        Jet { c }
    }

    pub fn neg(&self) -> Jet {
        Jet { c: self.c.iter().map(|x| x.neg()).collect() }
    }

    pub fn sub(&self, o: &Jet, prec: u32) -> Jet {
        self.add(&o.neg(), prec)
    }

    pub fn scale(&self, s: &Hp, prec: u32) -> Jet {
        Jet { c: self.c.iter().map(|x| x.mul(s, prec)).collect() }
    }

    pub fn mul(&self, o: &Jet, prec: u32) -> Jet {
        let n = self.order().min(o.order());
        let mut c = vec![Hp::zero(); n + 1];
        for (k, ck) in c.iter_mut().enumerate() {
            let mut acc = Hp::zero();
            for i in 0..=k {
                let a = &self.c[i];
                let b = &o.c[k - i];
                if !a.is_zero() && !b.is_zero() {
                    acc = acc.add(&a.mul(b, prec), prec);
                }
            }
            *ck = acc;
        }
        Jet { c }
    }

    pub fn recip(&self, prec: u32) -> Jet {
        assert!(!self.c[0].is_zero(), "jet reciprocal at zero");
        let n = self.order();
        let inv0 = self.c[0].recip(prec);
        let mut c = vec![Hp::zero(); n + 1];
        c[0] = inv0.clone();
        for k in 1..=n {
            // c_k = -inv0 · Σ_{i=1..k} a_i c_{k-i}
            let mut acc = Hp::zero();
            for i in 1..=k {
                acc = acc.add(&self.c[i].mul(&c[k - i], prec), prec);
            }
            c[k] = acc.mul(&inv0, prec).neg();
        }
        Jet { c }
    }

    pub fn div(&self, o: &Jet, prec: u32) -> Jet {
        self.mul(&o.recip(prec), prec)
    }

    /// exp of the series via the standard derivative recurrence.
    pub fn exp(&self, prec: u32) -> Jet {
        let n = self.order();
        let mut c = vec![Hp::zero(); n + 1];
        c[0] = self.c[0].exp(prec);
        for k in 1..=n {
            // k·v_k = Σ_{j=1..k} j·u_j·v_{k-j}
            let mut acc = Hp::zero();
            for j in 1..=k {
                let t = self.c[j].mul(&c[k - j], prec).mul(&Hp::from_i64(j as i64), prec);
                acc = acc.add(&t, prec);
            }
            c[k] = acc.div(&Hp::from_i64(k as i64), prec);
        }
        Jet { c }
    }

    /// Substitutes the inner series into `self`.
    ///
    /// `self` must be expanded at the inner series' value; the inner constant
    /// term is ignored.
    pub fn compose(&self, inner: &Jet, prec: u32) -> Jet {
        let n = self.order().min(inner.order());
        let mut g = inner.clone();
        g.c.truncate(n + 1);
        g.c[0] = Hp::zero();
        // Horner over series
        let mut acc = Jet::constant(self.c[n].clone(), n);
        for k in (0..n).rev() {
            acc = acc.mul(&g, prec);
            acc.c[0] = acc.c[0].add(&self.c[k], prec);
        }
        acc
    }

    /// Series reversion: the jet of the inverse function, expanded at
    /// `f(x0)`. The constant term of the result is set to `x0`... callers
    /// typically only use derivatives; the value slot holds x0.
    pub fn invert(&self, x0: Hp, prec: u32) -> Jet {
        let n = self.order();
        assert!(n >= 1 && !self.c[1].is_zero(), "inverse jet needs nonzero derivative");
        let mut f = self.clone();
        f.c[0] = Hp::zero();
        let mut fpow: Vec<Jet> = Vec::with_capacity(n + 1);
        fpow.push(Jet::constant(Hp::one(), n));
        for k in 1..=n {
            fpow.push(fpow[k - 1].mul(&f, prec));
        }
        let f1_inv = self.c[1].recip(prec);
        let mut g = vec![Hp::zero(); n + 1];
        for m in 1..=n {
            let mut acc = if m == 1 { Hp::one() } else { Hp::zero() };
            for k in 1..m {
                let t = g[k].mul(&fpow[k].c[m], prec);
                acc = acc.sub(&t, prec);
            }
            g[m] = acc.mul(&f1_inv.powi(m as u64, prec), prec);
        }
        g[0] = x0;
        Jet { c: g }
    }

    /// Substitutes `h → s·h` (variable rescaling).
    pub fn scale_var(&self, s: &Hp, prec: u32) -> Jet {
        let mut c = self.c.clone();
        let mut pw = Hp::one();
        for (k, ck) in c.iter_mut().enumerate() {
            if k > 0 {
                pw = pw.mul(s, prec);
                *ck = ck.mul(&pw, prec);
            }
        }
        Jet { c }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: u32 = 192;

    fn var(x: f64, n: usize) -> Jet {
        Jet::variable(Hp::from_f64(x), n)
    }

    #[test]
    fn exp_jet_derivatives() {
        // d^k/dx^k exp(2x) = 2^k exp(2x)
        let x = var(0.5, 5).scale(&Hp::from_i64(2), P);
        let j = x.exp(P);
        let base = 1f64.exp();
        for k in 0..=5 {
            let want = 2f64.powi(k as i32) * base;
            let got = j.deriv(k, P).to_f64();
            assert!((got - want).abs() < 1e-10, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn recip_and_mul() {
        let x = var(2.0, 4);
        let r = x.recip(P); // 1/x at 2
        assert!((r.deriv(2, P).to_f64() - 0.25).abs() < 1e-12);
        let prod = r.mul(&x, P);
        assert!((prod.value().to_f64() - 1.0).abs() < 1e-12);
        assert!(prod.deriv(1, P).to_f64().abs() < 1e-12);
    }

    #[test]
    fn compose_chain_rule() {
        // f(u) = u^2 at u = g(1) = 4, g(x) = 3x+1: (f∘g)'(1) = 24
        let mut g = var(1.0, 3).scale(&Hp::from_i64(3), P);
        g.c[0] = Hp::from_f64(4.0);
        let u = Jet::variable(Hp::from_f64(4.0), 3);
        let f = u.mul(&u, P);
        let fg = f.compose(&g, P);
        assert!((fg.value().to_f64() - 16.0).abs() < 1e-12);
        assert!((fg.deriv(1, P).to_f64() - 24.0).abs() < 1e-12);
        assert!((fg.deriv(2, P).to_f64() - 18.0).abs() < 1e-11);
    }

    #[test]
    fn series_reversion() {
        // f(x) = e^x at 0: inverse is ln at 1: derivatives 1, -1, 2, -6
        let f = var(0.0, 4).exp(P);
        let inv = f.invert(Hp::zero(), P);
        let expect = [0.0, 1.0, -1.0, 2.0, -6.0];
        for (k, want) in expect.iter().enumerate().skip(1) {
            let got = inv.deriv(k, P).to_f64();
            assert!((got - want).abs() < 1e-10, "k={k}: {got}");
        }
    }
}
