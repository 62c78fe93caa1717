//! Exact-breakpoint piecewise-smooth circle diffeomorphisms.
//!
//! A [`PiecewiseMap`] is a degree-1 circle diffeomorphism stored through its
//! lift: sorted rational cuts in [0,1) and one piece per interval. Pieces are
//! chains of primitives — exact affine segments, C^∞ smoothing joins, and
//! their inverses — acting on plain real representatives, so compositions
//! keep their exact affine skeleton and joins are never re-fitted. Integer
//! translations are baked into the chains when maps are composed or
//! inverted; the wrapper reduces mod 1 only at the boundary.
//!
//! [`MapExpr`] layers lazy structure on top: rigid rotations (including
//! angles with non-materializable denominators), cyclic covers of arbitrary
//! order, inverses and composition chains. Towers built by the construction
//! driver stay in this form; flattening a cover of order `10^{10^60}` is
//! neither possible nor needed.

use crate::error::{CjError, Result};
use crate::hp::Hp;
use crate::jet::Jet;
use crate::mag::{Alpha, HugeInt};
use crate::profile::{phi, phi_int, phi_jet};
use crate::rat::{mod1, rat_to_string, Rat};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use std::sync::Arc;

/// Closed arc `[lo, hi]` on the circle, `hi ≤ lo + 1` (wrapping when
/// `hi > 1`). Endpoints are exact.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleArc {
    pub lo: Rat,
    pub hi: Rat,
}

impl CircleArc {
    pub fn new(lo: Rat, hi: Rat) -> CircleArc {
        assert!(hi > lo && &hi - &lo <= Rat::one());
        CircleArc { lo, hi }
    }

    pub fn len(&self) -> Rat {
        &self.hi - &self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn midpoint(&self) -> Rat {
        mod1(&((&self.lo + &self.hi) / Rat::from_integer(BigInt::from(2))))
    }

    /// Closed containment, wrap-aware.
    pub fn contains(&self, x: &Rat) -> bool {
        let mut r = mod1(x);
        if r < mod1(&self.lo) {
            r += Rat::one();
        }
        let lo_shift = &self.lo - mod1(&self.lo);
        let r_abs = r + lo_shift;
        r_abs >= self.lo && r_abs <= self.hi
    }

    /// Endpoints of both boundary points as circle representatives.
    pub fn endpoints(&self) -> (Rat, Rat) {
        (mod1(&self.lo), mod1(&self.hi))
    }
}

/// Exact affine segment of the lift: `x ↦ slope·x + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub slope: Rat,
    pub offset: Rat,
}

impl Affine {
    pub fn apply(&self, x: &Rat) -> Rat {
        &self.slope * x + &self.offset
    }

    pub fn inverse(&self) -> Affine {
        Affine { slope: self.slope.recip(), offset: -&self.offset / &self.slope }
    }

    /// Precomposition with `x ↦ x + n`.
    fn translated(&self, n: &Rat) -> Affine {
        Affine { slope: self.slope.clone(), offset: &self.offset + &self.slope * n }
    }
}

/// C^∞ join between two affine segments whose extensions cross at the window
/// midpoint. On `[lo, hi]` (width w) the map is
/// `val_lo + slope_in·(x−lo) + (slope_out−slope_in)·w·PHI((x−lo)/w)`,
/// which meets both neighbours with flat contact and exits at the exact
/// rational value `val_lo + (slope_in+slope_out)·w/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct BumpJoin {
    pub lo: Rat,
    pub hi: Rat,
    pub slope_in: Rat,
    pub slope_out: Rat,
    pub val_lo: Rat,
}

impl BumpJoin {
    pub fn width(&self) -> Rat {
        &self.hi - &self.lo
    }

    pub fn val_hi(&self) -> Rat {
        &self.val_lo
            + (&self.slope_in + &self.slope_out) / Rat::from_integer(BigInt::from(2)) * self.width()
    }

    fn apply_hp(&self, x: &Hp, prec: u32) -> Hp {
        let lo = Hp::from_rat(&self.lo, prec);
        let w = Hp::from_rat(&self.width(), prec);
        let dx = x.sub(&lo, prec);
        let t = dx.div(&w, prec);
        let s_in = Hp::from_rat(&self.slope_in, prec);
        let ds = Hp::from_rat(&(&self.slope_out - &self.slope_in), prec);
        Hp::from_rat(&self.val_lo, prec)
            .add(&s_in.mul(&dx, prec), prec)
            .add(&ds.mul(&w, prec).mul(&phi_int(&t, prec), prec), prec)
    }

    fn jet(&self, x: &Hp, order: usize, prec: u32) -> Jet {
        let lo = Hp::from_rat(&self.lo, prec);
        let w = Hp::from_rat(&self.width(), prec);
        let t0 = x.sub(&lo, prec).div(&w, prec);
        let pj = phi_jet(&t0, order.max(1) - 1, prec);
        let ds = Hp::from_rat(&(&self.slope_out - &self.slope_in), prec);
        let s_in = Hp::from_rat(&self.slope_in, prec);
        let mut c = vec![Hp::zero(); order + 1];
        c[0] = self.apply_hp(x, prec);
        if order >= 1 {
            c[1] = s_in.add(&ds.mul(pj.value(), prec), prec);
        }
        let winv = w.recip(prec);
        let mut wpow = Hp::one();
        for (k, ck) in c.iter_mut().enumerate().skip(2) {
            // g^(k)/k! = ds·phi^(k−1)(t)/(w^{k−1}·k!) = ds·c_phi[k−1]/(w^{k−1}·k)
            wpow = wpow.mul(&winv, prec);
            let cphi = pj.c.get(k - 1).cloned().unwrap_or_else(Hp::zero);
            *ck = ds.mul(&cphi, prec).mul(&wpow, prec).div(&Hp::from_i64(k as i64), prec);
        }
        Jet { c }
    }

    /// Solves g(x) = y on the window: f64 bisection seed, then Newton at
    /// full precision (quadratic convergence needs only a handful of steps).
    fn apply_inv_hp(&self, y: &Hp, prec: u32) -> Hp {
        let to_f = |r: &Rat| -> f64 {
            r.numer().to_string().parse::<f64>().unwrap() / r.denom().to_string().parse::<f64>().unwrap()
        };
        let (lo_f, hi_f) = (to_f(&self.lo), to_f(&self.hi));
        let (v0, s_in_f, ds_f) = (
            to_f(&self.val_lo),
            to_f(&self.slope_in),
            to_f(&(&self.slope_out - &self.slope_in)),
        );
        let w_f = hi_f - lo_f;
        let yf = y.to_f64();
        let model = |x: f64| v0 + s_in_f * (x - lo_f) + ds_f * w_f * crate::profile::phi_int_f64((x - lo_f) / w_f);
        let (mut lf, mut hf) = (lo_f, hi_f);
        for _ in 0..50 {
            let mid = 0.5 * (lf + hf);
            if model(mid) < yf {
                lf = mid;
            } else {
                hf = mid;
            }
        }
        let mut x = Hp::from_f64(0.5 * (lf + hf));
        let s_in = Hp::from_rat(&self.slope_in, prec);
        let ds = Hp::from_rat(&(&self.slope_out - &self.slope_in), prec);
        let wlo = Hp::from_rat(&self.lo, prec);
        let w = Hp::from_rat(&self.width(), prec);
        // ~1e-12 seed: each Newton step squares the accuracy
        let steps = (prec as f64 / 40.0).log2().ceil().max(1.0) as usize + 2;
        for _ in 0..steps {
            let f = self.apply_hp(&x, prec).sub(y, prec);
            if f.is_zero() {
                break;
            }
            let t = x.sub(&wlo, prec).div(&w, prec);
            let d = s_in.add(&ds.mul(&phi(&t, prec), prec), prec);
            let step = f.div(&d, prec);
            x = x.sub(&step, prec);
        }
        x
    }
}

/// Primitive factor of a piece chain; all primitives are plain real maps.
#[derive(Clone, Debug, PartialEq)]
pub enum Prim {
    Aff(Affine),
    Bump(BumpJoin),
    /// Inverse of the join; its domain is the join's value window.
    BumpInv(BumpJoin),
}

impl Prim {
    fn inverse(&self) -> Prim {
        match self {
            Prim::Aff(a) => Prim::Aff(a.inverse()),
            Prim::Bump(b) => Prim::BumpInv(b.clone()),
            Prim::BumpInv(b) => Prim::Bump(b.clone()),
        }
    }

    /// Precomposition with `x ↦ x + n`.
    fn translated(&self, n: &Rat) -> Prim {
        if n.is_zero() {
            return self.clone();
        }
        match self {
            Prim::Aff(a) => Prim::Aff(a.translated(n)),
            Prim::Bump(b) => Prim::Bump(BumpJoin {
                lo: &b.lo - n,
                hi: &b.hi - n,
                slope_in: b.slope_in.clone(),
                slope_out: b.slope_out.clone(),
                val_lo: b.val_lo.clone(),
            }),
            // translating the inverse's input shifts the forward values
            Prim::BumpInv(b) => Prim::BumpInv(BumpJoin {
                lo: b.lo.clone(),
                hi: b.hi.clone(),
                slope_in: b.slope_in.clone(),
                slope_out: b.slope_out.clone(),
                val_lo: &b.val_lo - n,
            }),
        }
    }

    fn apply_rat(&self, x: &Rat) -> Option<Rat> {
        match self {
            Prim::Aff(a) => Some(a.apply(x)),
            Prim::Bump(b) => {
                if *x == b.lo {
                    Some(b.val_lo.clone())
                } else if *x == b.hi {
                    Some(b.val_hi())
                } else {
                    None
                }
            }
            Prim::BumpInv(b) => {
                if *x == b.val_lo {
                    Some(b.lo.clone())
                } else if *x == b.val_hi() {
                    Some(b.hi.clone())
                } else {
                    None
                }
            }
        }
    }

    fn apply_hp(&self, x: &Hp, prec: u32) -> Hp {
        match self {
            Prim::Aff(a) => Hp::from_rat(&a.slope, prec)
                .mul(x, prec)
                .add(&Hp::from_rat(&a.offset, prec), prec),
            Prim::Bump(b) => b.apply_hp(x, prec),
            Prim::BumpInv(b) => b.apply_inv_hp(x, prec),
        }
    }

    fn jet(&self, x: &Hp, order: usize, prec: u32) -> Jet {
        match self {
            Prim::Aff(a) => {
                let mut j = Jet::constant(self.apply_hp(x, prec), order);
                if order >= 1 {
                    j.c[1] = Hp::from_rat(&a.slope, prec);
                }
                j
            }
            Prim::Bump(b) => b.jet(x, order, prec),
            Prim::BumpInv(b) => {
                let xin = b.apply_inv_hp(x, prec);
                let fwd = b.jet(&xin, order, prec);
                fwd.invert(xin, prec)
            }
        }
    }

    pub fn slope_range(&self) -> (Rat, Rat) {
        match self {
            Prim::Aff(a) => (a.slope.clone(), a.slope.clone()),
            Prim::Bump(b) => {
                if b.slope_in <= b.slope_out {
                    (b.slope_in.clone(), b.slope_out.clone())
                } else {
                    (b.slope_out.clone(), b.slope_in.clone())
                }
            }
            Prim::BumpInv(b) => {
                let (lo, hi) = Prim::Bump(b.clone()).slope_range();
                (hi.recip(), lo.recip())
            }
        }
    }
}

/// One piece of the map: a composition chain of primitives, applied in order.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub prims: Vec<Prim>,
}

impl Piece {
    pub fn affine(slope: Rat, offset: Rat) -> Piece {
        Piece { prims: vec![Prim::Aff(Affine { slope, offset })] }
    }

    pub fn is_pure_affine(&self) -> bool {
        self.prims.iter().all(|p| matches!(p, Prim::Aff(_)))
    }

    /// Exact total slope when every factor is affine.
    pub fn affine_slope(&self) -> Option<Rat> {
        let mut s = Rat::one();
        for p in &self.prims {
            match p {
                Prim::Aff(a) => s *= &a.slope,
                _ => return None,
            }
        }
        Some(s)
    }

    pub fn apply_rat(&self, x: &Rat) -> Option<Rat> {
        let mut v = x.clone();
        for p in &self.prims {
            v = p.apply_rat(&v)?;
        }
        Some(v)
    }

    pub fn apply_hp(&self, x: &Hp, prec: u32) -> Hp {
        let mut v = x.clone();
        for p in &self.prims {
            v = p.apply_hp(&v, prec);
        }
        v
    }

    fn jet(&self, x: &Hp, order: usize, prec: u32) -> Jet {
        let mut j = Jet::variable(x.clone(), order);
        for p in &self.prims {
            let local = p.jet(j.value(), order, prec);
            j = local.compose(&j, prec);
        }
        j
    }

    pub fn slope_range(&self) -> (Rat, Rat) {
        let mut lo = Rat::one();
        let mut hi = Rat::one();
        for p in &self.prims {
            let (l, h) = p.slope_range();
            lo *= l;
            hi *= h;
        }
        (lo, hi)
    }

    fn translated(&self, n: &Rat) -> Piece {
        if n.is_zero() || self.prims.is_empty() {
            return self.clone();
        }
        let mut prims = self.prims.clone();
        prims[0] = prims[0].translated(n);
        Piece { prims }
    }
}

/// Breakpoint: exact, or a certified bracket produced by composing through a
/// join interior.
#[derive(Clone, Debug)]
pub enum Cut {
    Exact(Rat),
    Approx { lo: Rat, hi: Rat },
}

impl Cut {
    pub fn lower(&self) -> &Rat {
        match self {
            Cut::Exact(r) => r,
            Cut::Approx { lo, .. } => lo,
        }
    }

    pub fn upper(&self) -> &Rat {
        match self {
            Cut::Exact(r) => r,
            Cut::Approx { hi, .. } => hi,
        }
    }

    pub fn exact(&self) -> Option<&Rat> {
        match self {
            Cut::Exact(r) => Some(r),
            Cut::Approx { .. } => None,
        }
    }
}

/// Piecewise-defined degree-1 circle diffeomorphism (its lift restricted to
/// one period). `pieces[i]` is valid on representatives in
/// `[cuts[i], cuts[i+1])`, the last piece wrapping to `cuts[0] + 1`.
#[derive(Clone, Debug)]
pub struct PiecewiseMap {
    pub cuts: Vec<Cut>,
    pub pieces: Vec<Piece>,
}

impl PiecewiseMap {
    pub fn identity() -> PiecewiseMap {
        PiecewiseMap {
            cuts: vec![Cut::Exact(Rat::zero())],
            pieces: vec![Piece::affine(Rat::one(), Rat::zero())],
        }
    }

    /// Rigid rotation as a single affine piece of slope one.
    pub fn rotation(angle: &Rat) -> PiecewiseMap {
        PiecewiseMap {
            cuts: vec![Cut::Exact(Rat::zero())],
            pieces: vec![Piece::affine(Rat::one(), mod1(angle))],
        }
    }

    /// Representative of `x` in `[cuts[0], cuts[0]+1)` and its piece index.
    pub fn locate(&self, x: &Rat) -> (usize, Rat) {
        let base = self.cuts[0].lower();
        let mut xr = mod1(x);
        if xr < *base {
            xr += Rat::one();
        }
        for i in 0..self.cuts.len() - 1 {
            if xr < *self.cuts[i + 1].lower() {
                return (i, xr);
            }
        }
        (self.cuts.len() - 1, xr)
    }

    fn locate_hp(&self, x: &Hp, prec: u32) -> (usize, Hp) {
        let base = Hp::from_rat(self.cuts[0].lower(), prec);
        let mut xr = x.frac(prec);
        if xr.cmp(&base) == Ordering::Less {
            xr = xr.add(&Hp::one(), prec);
        }
        for i in 0..self.cuts.len() - 1 {
            let next = Hp::from_rat(self.cuts[i + 1].lower(), prec);
            if xr.cmp(&next) == Ordering::Less {
                return (i, xr);
            }
        }
        (self.cuts.len() - 1, xr)
    }

    /// Exact evaluation; `None` when the point passes through a join
    /// interior (use the float route there).
    pub fn eval_rat(&self, x: &Rat) -> Option<Rat> {
        let (i, xr) = self.locate(x);
        self.pieces[i].apply_rat(&xr).map(|v| mod1(&v))
    }

    pub fn eval_hp(&self, x: &Hp, prec: u32) -> Hp {
        let (i, xr) = self.locate_hp(x, prec);
        self.pieces[i].apply_hp(&xr, prec).frac(prec)
    }

    /// Jet at a float point (value slot reduced mod 1).
    pub fn jet(&self, x: &Hp, order: usize, prec: u32) -> Jet {
        let (i, xr) = self.locate_hp(x, prec);
        let mut j = self.pieces[i].jet(&xr, order, prec);
        j.c[0] = j.c[0].frac(prec);
        j
    }

    /// Exact first derivative inside an all-affine piece.
    pub fn derivative_exact(&self, x: &Rat) -> Option<Rat> {
        let (i, _) = self.locate(x);
        self.pieces[i].affine_slope()
    }

    pub fn derivative_hp(&self, x: &Hp, k: usize, prec: u32) -> Hp {
        self.jet(x, k, prec).deriv(k, prec)
    }

    /// Exact range of the first derivative over the whole circle.
    pub fn slope_range(&self) -> (Rat, Rat) {
        let mut lo: Option<Rat> = None;
        let mut hi: Option<Rat> = None;
        for p in &self.pieces {
            let (l, h) = p.slope_range();
            lo = Some(match lo {
                None => l,
                Some(c) => c.min(l),
            });
            hi = Some(match hi {
                None => h,
                Some(c) => c.max(h),
            });
        }
        (lo.unwrap(), hi.unwrap())
    }

    pub fn max_slope(&self) -> Rat {
        self.slope_range().1
    }

    pub fn min_slope(&self) -> Rat {
        self.slope_range().0
    }

    /// Exact inverse.
    pub fn inverse(&self) -> PiecewiseMap {
        let mut entries: Vec<(Cut, Piece)> = Vec::with_capacity(self.pieces.len());
        for (i, piece) in self.pieces.iter().enumerate() {
            let inv_prims: Vec<Prim> = piece.prims.iter().rev().map(|p| p.inverse()).collect();
            let mut inv_piece = Piece { prims: inv_prims };
            let cut = match &self.cuts[i] {
                Cut::Exact(r) => match piece.apply_rat(r) {
                    Some(v) => {
                        let u = mod1(&v);
                        let shift = &v - &u; // integer
                        inv_piece = inv_piece.translated(&shift);
                        Cut::Exact(u)
                    }
                    None => unreachable!("piece boundaries always evaluate exactly"),
                },
                Cut::Approx { lo, hi } => {
                    let vlo = piece.apply_rat(lo);
                    let vhi = piece.apply_rat(hi);
                    match (vlo, vhi) {
                        (Some(a), Some(b)) => {
                            let u = mod1(&a);
                            let shift = &a - &u;
                            inv_piece = inv_piece.translated(&shift);
                            Cut::Approx { lo: u.clone(), hi: &u + (b - a) }
                        }
                        _ => unreachable!("bracket endpoints always evaluate exactly"),
                    }
                }
            };
            entries.push((cut, inv_piece));
        }
        entries.sort_by(|a, b| a.0.lower().cmp(b.0.lower()));
        PiecewiseMap {
            cuts: entries.iter().map(|e| e.0.clone()).collect(),
            pieces: entries.into_iter().map(|e| e.1).collect(),
        }
    }

    /// Composition `self ∘ g` (apply `g` first). Pieces become chains;
    /// consecutive exact affines collapse.
    pub fn compose_after(&self, g: &PiecewiseMap) -> PiecewiseMap {
        let ginv = g.inverse();
        let mut cuts: Vec<Cut> = g.cuts.clone();
        for c in &self.cuts {
            let pre = match c {
                Cut::Exact(r) => match ginv.eval_rat(r) {
                    Some(v) => Cut::Exact(v),
                    None => {
                        // preimage sits inside a join; bracket it by the join
                        // window (certified by monotonicity)
                        let (idx, _) = ginv.locate(r);
                        let lo = mod1(ginv.cuts[idx].lower());
                        let hi_raw = if idx + 1 < ginv.cuts.len() {
                            ginv.cuts[idx + 1].upper().clone()
                        } else {
                            ginv.cuts[0].upper() + Rat::one()
                        };
                        Cut::Approx { lo: lo.clone(), hi: &lo + (hi_raw - ginv.cuts[idx].lower()) }
                    }
                },
                Cut::Approx { lo, hi } => {
                    let plo = ginv.eval_rat(lo).unwrap_or_else(|| mod1(lo));
                    let phi_ = ginv.eval_rat(hi).unwrap_or_else(|| mod1(hi));
                    Cut::Approx { lo: plo, hi: phi_ }
                }
            };
            cuts.push(pre);
        }
        cuts.sort_by(|a, b| a.lower().cmp(b.lower()));
        cuts.dedup_by(|a, b| a.lower() == b.lower());
        let two = Rat::from_integer(BigInt::from(2));
        let mut pieces = Vec::with_capacity(cuts.len());
        for i in 0..cuts.len() {
            let a = cuts[i].upper().clone();
            let b = if i + 1 < cuts.len() {
                cuts[i + 1].lower().clone()
            } else {
                cuts[0].lower() + Rat::one()
            };
            let sample = (&a + &b) / &two;
            let (gi, g_rep) = g.locate(&sample);
            // shift aligning the composed representative with g's own
            let comp_shift = &g_rep - {
                let mut xr = mod1(&sample);
                if xr < *cuts[0].lower() {
                    xr += Rat::one();
                }
                xr
            };
            let g_piece = g.pieces[gi].translated(&comp_shift);
            // raw g-value on this piece (for join interiors, the window
            // midpoint value is representative enough to pick the out piece)
            let g_sample_val = match g_piece.apply_rat(&{
                let mut xr = mod1(&sample);
                if xr < *cuts[0].lower() {
                    xr += Rat::one();
                }
                xr
            }) {
                Some(v) => v,
                None => {
                    let hpv = g_piece.apply_hp(&Hp::from_rat(&sample, 128), 128);
                    hpv.to_rat()
                }
            };
            let u = mod1(&g_sample_val);
            let (fi, f_rep) = self.locate(&u);
            let f_shift = &f_rep - &g_sample_val;
            let f_piece = self.pieces[fi].translated(&f_shift);
            let mut prims = g_piece.prims;
            prims.extend(f_piece.prims);
            pieces.push(Piece { prims: collapse_affine(prims) });
        }
        PiecewiseMap { cuts, pieces }
    }

    /// Monotonicity and continuity sanity check (exact at exact cuts).
    pub fn validate(&self) -> Result<()> {
        for (i, piece) in self.pieces.iter().enumerate() {
            let (l, _h) = piece.slope_range();
            if !l.is_positive() {
                return Err(CjError::GeometryInfeasible(format!(
                    "piece {i} has nonpositive slope {}",
                    rat_to_string(&l)
                )));
            }
        }
        for i in 0..self.cuts.len() {
            let j = (i + 1) % self.cuts.len();
            let (cj, right) = if j == 0 {
                (self.cuts[0].exact(), self.cuts[0].exact().map(|c| c + Rat::one()))
            } else {
                (self.cuts[j].exact(), self.cuts[j].exact().cloned())
            };
            if let (Some(cj), Some(right)) = (cj, right) {
                let a = self.pieces[i].apply_rat(&right);
                let b = self.pieces[j].apply_rat(cj);
                if let (Some(a), Some(b)) = (a, b) {
                    if mod1(&a) != mod1(&b) {
                        return Err(CjError::GeometryInfeasible(format!(
                            "discontinuity at cut {}: {} vs {}",
                            rat_to_string(cj),
                            rat_to_string(&mod1(&a)),
                            rat_to_string(&mod1(&b))
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Exact increase of the lift over one period (1 for degree 1). Join
    /// increments use the exact half-sum law, so the result is rational.
    pub fn total_increase(&self) -> Option<Rat> {
        let mut total = Rat::zero();
        for i in 0..self.cuts.len() {
            let a = self.cuts[i].exact()?.clone();
            let b = if i + 1 < self.cuts.len() {
                self.cuts[i + 1].exact()?.clone()
            } else {
                self.cuts[0].exact()? + Rat::one()
            };
            let va = self.pieces[i].apply_rat(&a)?;
            let vb = self.pieces[i].apply_rat(&b)?;
            total += vb - va;
        }
        Some(total)
    }

    /// Exact image `[f(a), f(a) + len]` of the arc from `a` of circle length
    /// `mod1(b − a)`, when every crossed boundary evaluates exactly.
    pub fn image_of_arc(&self, a: &Rat, b: &Rat) -> Option<(Rat, Rat)> {
        let (i0, ra) = self.locate(a);
        let len = mod1(&(b - a));
        let rb = &ra + &len;
        let fa = mod1(&self.pieces[i0].apply_rat(&ra)?);
        let mut idx = i0;
        let mut offset = Rat::zero();
        let mut cur = ra;
        let mut total = Rat::zero();
        for _ in 0..=self.cuts.len() + 1 {
            let piece_right = if idx + 1 < self.cuts.len() {
                self.cuts[idx + 1].exact()?.clone()
            } else {
                self.cuts[0].exact()? + Rat::one()
            } + &offset;
            let v_cur = self.pieces[idx].apply_rat(&(&cur - &offset))?;
            if rb <= piece_right {
                let v_end = self.pieces[idx].apply_rat(&(&rb - &offset))?;
                total += v_end - v_cur;
                return Some((fa.clone(), fa + total));
            }
            let v_right = self.pieces[idx].apply_rat(&(&piece_right - &offset))?;
            total += v_right - v_cur;
            cur = piece_right;
            idx += 1;
            if idx == self.cuts.len() {
                idx = 0;
                offset += Rat::one();
            }
        }
        None
    }
}

fn collapse_affine(prims: Vec<Prim>) -> Vec<Prim> {
    let mut out: Vec<Prim> = Vec::with_capacity(prims.len());
    for p in prims {
        if let (Some(Prim::Aff(last)), Prim::Aff(next)) = (out.last(), &p) {
            let slope = &next.slope * &last.slope;
            let offset = &next.slope * &last.offset + &next.offset;
            let n = out.len();
            out[n - 1] = Prim::Aff(Affine { slope, offset });
        } else {
            out.push(p);
        }
    }
    out
}

// ───────────────────────────────────────────────────────────────────────────
// Lazy map expressions: rotations, cyclic covers, inverses, chains
// ───────────────────────────────────────────────────────────────────────────

/// Rotation angle: exact rational, structural (huge denominator), or float.
#[derive(Clone, Debug)]
pub enum Angle {
    Rat(Rat),
    Sym(Alpha),
    Float(Hp),
}

impl Angle {
    pub fn to_hp(&self, prec: u32) -> Hp {
        match self {
            Angle::Rat(r) => Hp::from_rat(&mod1(r), prec),
            Angle::Sym(a) => a.value_hp(prec),
            Angle::Float(h) => h.clone(),
        }
    }

    pub fn exact(&self) -> Option<Rat> {
        match self {
            Angle::Rat(r) => Some(mod1(r)),
            Angle::Sym(a) => a.to_plain_rat(),
            Angle::Float(_) => None,
        }
    }
}

/// Lazy circle-map expression.
#[derive(Clone, Debug)]
pub enum MapExpr {
    Id,
    Prim(Arc<PiecewiseMap>),
    Rotation(Angle),
    /// Cyclic cover `h(x) = x + (base(y) − y)/q` with `y = frac(q·x)`;
    /// commutes with rotation by `1/q` and fixes 0 when the base does.
    Lift { base: Arc<PiecewiseMap>, q: HugeInt },
    Inverse(Arc<MapExpr>),
    /// Factors applied left to right.
    Chain(Vec<MapExpr>),
}

/// Bits of cover order beyond which float evaluation treats the lifted map
/// as the identity, with a certified error bound.
const LIFT_FLOAT_LIMIT_BITS: f64 = 16384.0;

impl MapExpr {
    pub fn rotation_rat(a: &Rat) -> MapExpr {
        MapExpr::Rotation(Angle::Rat(a.clone()))
    }

    /// Mathematical composition `outer ∘ inner`.
    pub fn compose(outer: MapExpr, inner: MapExpr) -> MapExpr {
        let mut factors = Vec::new();
        match inner {
            MapExpr::Chain(v) => factors.extend(v),
            MapExpr::Id => {}
            other => factors.push(other),
        }
        match outer {
            MapExpr::Chain(v) => factors.extend(v),
            MapExpr::Id => {}
            other => factors.push(other),
        }
        if factors.is_empty() {
            MapExpr::Id
        } else if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            MapExpr::Chain(factors)
        }
    }

    pub fn inverse(&self) -> MapExpr {
        match self {
            MapExpr::Id => MapExpr::Id,
            MapExpr::Inverse(e) => (**e).clone(),
            MapExpr::Prim(p) => MapExpr::Prim(Arc::new(p.inverse())),
            MapExpr::Rotation(Angle::Rat(r)) => MapExpr::Rotation(Angle::Rat(mod1(&-r.clone()))),
            MapExpr::Lift { base, q } => {
                MapExpr::Lift { base: Arc::new(base.inverse()), q: q.clone() }
            }
            MapExpr::Chain(v) => MapExpr::Chain(v.iter().rev().map(|f| f.inverse()).collect()),
            other => MapExpr::Inverse(Arc::new(other.clone())),
        }
    }

    /// Float evaluation together with a log2 upper bound on the absolute
    /// error (certified against truncated cover factors).
    pub fn eval_hp_err(&self, x: &Hp, prec: u32) -> (Hp, f64) {
        match self {
            MapExpr::Id => (x.frac(prec), -(prec as f64) + 4.0),
            MapExpr::Prim(p) => (p.eval_hp(x, prec), -(prec as f64) + 24.0),
            MapExpr::Rotation(a) => (x.add(&a.to_hp(prec), prec).frac(prec), -(prec as f64) + 8.0),
            MapExpr::Lift { base, q } => {
                let bits = q.to_mag().log2_hint();
                if bits > (prec as f64 - 64.0).min(LIFT_FLOAT_LIMIT_BITS) {
                    (x.frac(prec), -bits + 2.0)
                } else {
                    let wp = prec + bits as u32 + 32;
                    let qh = q.to_hp(wp);
                    let y = qh.mul(x, wp).frac(wp);
                    let v = base.eval_hp(&y, prec);
                    let delta = v.sub(&y, prec).div(&qh, prec);
                    (x.add(&delta, wp).frac(prec), -(prec as f64) + 24.0)
                }
            }
            MapExpr::Inverse(e) => e.eval_inverse_hp_err(x, prec),
            MapExpr::Chain(v) => {
                let mut cur = x.clone();
                let mut err: f64 = f64::NEG_INFINITY;
                for f in v {
                    let lip = f.max_slope_log2();
                    let (nxt, e2) = f.eval_hp_err(&cur, prec);
                    err = (err + lip.max(0.0)).max(e2) + 1.0;
                    cur = nxt;
                }
                (cur, err)
            }
        }
    }

    fn eval_inverse_hp_err(&self, x: &Hp, prec: u32) -> (Hp, f64) {
        match self {
            MapExpr::Id => (x.frac(prec), -(prec as f64) + 4.0),
            MapExpr::Prim(p) => (p.inverse().eval_hp(x, prec), -(prec as f64) + 24.0),
            MapExpr::Rotation(a) => (x.sub(&a.to_hp(prec), prec).frac(prec), -(prec as f64) + 8.0),
            MapExpr::Lift { base, q } => {
                MapExpr::Lift { base: Arc::new(base.inverse()), q: q.clone() }.eval_hp_err(x, prec)
            }
            MapExpr::Inverse(e) => e.eval_hp_err(x, prec),
            MapExpr::Chain(v) => {
                let mut cur = x.clone();
                let mut err: f64 = f64::NEG_INFINITY;
                for f in v.iter().rev() {
                    let lip = -f.min_slope_log2();
                    let (nxt, e2) = f.eval_inverse_hp_err(&cur, prec);
                    err = (err + lip.max(0.0)).max(e2) + 1.0;
                    cur = nxt;
                }
                (cur, err)
            }
        }
    }

    pub fn eval_hp(&self, x: &Hp, prec: u32) -> Hp {
        self.eval_hp_err(x, prec).0
    }

    /// Exact evaluation; `None` when some factor cannot produce a rational
    /// (join interiors, non-materializable cover orders or angles).
    pub fn eval_rat(&self, x: &Rat, max_bits: u64) -> Option<Rat> {
        match self {
            MapExpr::Id => Some(mod1(x)),
            MapExpr::Prim(p) => p.eval_rat(x),
            MapExpr::Rotation(a) => a.exact().map(|r| mod1(&(&r + x))),
            MapExpr::Lift { base, q } => {
                let y = q.mul_rat_mod1(x);
                let img = base.eval_rat(&y)?;
                if img == y {
                    // fixed cell point: exact at any cover order
                    return Some(mod1(x));
                }
                let qm = q.to_uint(max_bits)?;
                let delta = (img - &y) / Rat::from_integer(BigInt::from(qm));
                Some(mod1(&(x + delta)))
            }
            MapExpr::Inverse(e) => e.eval_rat_inverse(x, max_bits),
            MapExpr::Chain(v) => {
                let mut cur = mod1(x);
                for f in v {
                    cur = f.eval_rat(&cur, max_bits)?;
                }
                Some(cur)
            }
        }
    }

    fn eval_rat_inverse(&self, x: &Rat, max_bits: u64) -> Option<Rat> {
        match self {
            MapExpr::Id => Some(mod1(x)),
            MapExpr::Prim(p) => p.inverse().eval_rat(x),
            MapExpr::Rotation(a) => a.exact().map(|r| mod1(&(x - &r))),
            MapExpr::Lift { base, q } => {
                MapExpr::Lift { base: Arc::new(base.inverse()), q: q.clone() }.eval_rat(x, max_bits)
            }
            MapExpr::Inverse(e) => e.eval_rat(x, max_bits),
            MapExpr::Chain(v) => {
                let mut cur = mod1(x);
                for f in v.iter().rev() {
                    cur = f.eval_rat_inverse(&cur, max_bits)?;
                }
                Some(cur)
            }
        }
    }

    /// Jet at a float point; `None` when a cover order exceeds what the
    /// argument precision can resolve.
    pub fn jet(&self, x: &Hp, order: usize, prec: u32) -> Option<Jet> {
        match self {
            MapExpr::Id => Some(Jet::variable(x.frac(prec), order)),
            MapExpr::Prim(p) => Some(p.jet(x, order, prec)),
            MapExpr::Rotation(a) => {
                Some(Jet::variable(x.add(&a.to_hp(prec), prec).frac(prec), order))
            }
            MapExpr::Lift { base, q } => {
                let bits = q.to_mag().log2_hint();
                if bits > (prec as f64 - 64.0).min(LIFT_FLOAT_LIMIT_BITS) {
                    return None;
                }
                let wp = prec + bits as u32 + 32;
                let qh = q.to_hp(wp);
                let y = qh.mul(x, wp).frac(wp);
                let bj = base.jet(&y, order, prec);
                // h^(k)(x) = base^(k)(y)·q^{k−1}
                let mut j = bj.scale_var(&qh, prec);
                let qinv = qh.recip(prec.max(bits as u32 + 64));
                for c in j.c.iter_mut() {
                    *c = c.mul(&qinv, prec);
                }
                j.c[0] = x.add(&bj.value().sub(&y, prec).mul(&qinv, prec), wp).frac(prec);
                Some(j)
            }
            MapExpr::Inverse(e) => {
                let pre = e.eval_inverse_hp_err(x, prec).0;
                let fwd = e.jet(&pre, order, prec)?;
                Some(fwd.invert(pre, prec))
            }
            MapExpr::Chain(v) => {
                let mut j = Jet::variable(x.frac(prec), order);
                for f in v {
                    let mut local = f.jet(j.value(), order, prec)?;
                    local.c[0] = local.c[0].frac(prec);
                    j = local.compose(&j, prec);
                }
                Some(j)
            }
        }
    }

    /// Exact upper bound for the derivative.
    pub fn max_slope(&self) -> Rat {
        match self {
            MapExpr::Id | MapExpr::Rotation(_) => Rat::one(),
            MapExpr::Prim(p) => p.max_slope(),
            MapExpr::Lift { base, .. } => base.max_slope(),
            MapExpr::Inverse(e) => e.min_slope().recip(),
            MapExpr::Chain(v) => v.iter().map(|f| f.max_slope()).product(),
        }
    }

    pub fn min_slope(&self) -> Rat {
        match self {
            MapExpr::Id | MapExpr::Rotation(_) => Rat::one(),
            MapExpr::Prim(p) => p.min_slope(),
            MapExpr::Lift { base, .. } => base.min_slope(),
            MapExpr::Inverse(e) => e.max_slope().recip(),
            MapExpr::Chain(v) => v.iter().map(|f| f.min_slope()).product(),
        }
    }

    fn max_slope_log2(&self) -> f64 {
        let s = self.max_slope();
        (s.numer().magnitude().bits() as f64) - (s.denom().magnitude().bits() as f64) + 1.0
    }

    fn min_slope_log2(&self) -> f64 {
        let s = self.min_slope();
        (s.numer().magnitude().bits() as f64) - (s.denom().magnitude().bits() as f64) - 1.0
    }
}

/// Cyclic cover of `hhat` of order `q`, fixing 0.
///
/// Fails unless `hhat(0) = 0`: the cover with a fixed point exists exactly
/// when the base has one, and the tower pins it at 0.
pub fn cyclic_lift(hhat: &PiecewiseMap, q: HugeInt, fix_zero: bool) -> Result<MapExpr> {
    if fix_zero && hhat.eval_rat(&Rat::zero()) != Some(Rat::zero()) {
        return Err(CjError::NoFixedPointLift("base map does not fix 0".into()));
    }
    if q.is_one() {
        return Ok(MapExpr::Prim(Arc::new(hhat.clone())));
    }
    Ok(MapExpr::Lift { base: Arc::new(hhat.clone()), q })
}

/// Materializes a cover of small order into an explicit piecewise map
/// (dual route for the scaling-law tests).
pub fn flatten_lift(base: &PiecewiseMap, q: u64) -> PiecewiseMap {
    assert!(q >= 1 && q <= 4096, "flatten only small covers");
    let qr = Rat::from_integer(BigInt::from(q));
    let mut cuts = Vec::new();
    let mut pieces = Vec::new();
    for j in 0..q {
        let jr = Rat::from_integer(BigInt::from(j));
        for (cut, piece) in base.cuts.iter().zip(base.pieces.iter()) {
            let c = match cut {
                Cut::Exact(r) => Cut::Exact((&jr + r) / &qr),
                Cut::Approx { lo, hi } => {
                    Cut::Approx { lo: (&jr + lo) / &qr, hi: (&jr + hi) / &qr }
                }
            };
            let prims = piece.prims.iter().map(|p| scale_prim(p, &jr, &qr)).collect();
            cuts.push(c);
            pieces.push(Piece { prims });
        }
    }
    PiecewiseMap { cuts, pieces }
}

fn scale_prim(p: &Prim, j: &Rat, q: &Rat) -> Prim {
    // h(x) = (g(qx − j) + j)/q on the j-th cell
    match p {
        Prim::Aff(a) => Prim::Aff(Affine {
            slope: a.slope.clone(),
            offset: (&a.offset + j * (Rat::one() - &a.slope)) / q,
        }),
        Prim::Bump(b) => Prim::Bump(BumpJoin {
            lo: (j + &b.lo) / q,
            hi: (j + &b.hi) / q,
            slope_in: b.slope_in.clone(),
            slope_out: b.slope_out.clone(),
            val_lo: (j + &b.val_lo) / q,
        }),
        Prim::BumpInv(b) => Prim::BumpInv(BumpJoin {
            lo: (j + &b.lo) / q,
            hi: (j + &b.hi) / q,
            slope_in: b.slope_in.clone(),
            slope_out: b.slope_out.clone(),
            val_lo: (j + &b.val_lo) / q,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat;

    const P: u32 = 256;

    /// Two-slope corner map fixing 0: slope 2 on [1/3, 2/3), slope 1/2 on
    /// the wrapping piece through 0 (no joins; corners are fine for piece
    /// plumbing tests).
    fn corner_map() -> PiecewiseMap {
        // continuity: value at 1/3 is 1/6; at 2/3 is 1/6 + 2/3 = 5/6;
        // at 4/3 (≡ 1/3 of next period) must be 7/6: slope 1/2 from (2/3,5/6)
        PiecewiseMap {
            cuts: vec![Cut::Exact(rat(1, 3)), Cut::Exact(rat(2, 3))],
            pieces: vec![
                Piece::affine(rat(2, 1), rat(-1, 2)),
                Piece::affine(rat(1, 2), rat(1, 2)),
            ],
        }
    }

    #[test]
    fn identity_and_rotation_eval() {
        let id = PiecewiseMap::identity();
        assert_eq!(id.eval_rat(&rat(1, 3)), Some(rat(1, 3)));
        let r = PiecewiseMap::rotation(&rat(1, 4));
        assert_eq!(r.eval_rat(&rat(7, 8)), Some(rat(1, 8)));
        assert_eq!(r.derivative_exact(&rat(1, 2)), Some(rat(1, 1)));
    }

    #[test]
    fn corner_map_mechanics() {
        let m = corner_map();
        m.validate().unwrap();
        assert_eq!(m.total_increase(), Some(rat(1, 1)));
        assert_eq!(m.eval_rat(&rat(0, 1)), Some(rat(0, 1)));
        assert_eq!(m.eval_rat(&rat(1, 2)), Some(rat(1, 2)));
        assert_eq!(m.eval_rat(&rat(5, 6)), Some(mod1(&rat(11, 12))));
        assert_eq!(m.derivative_exact(&rat(1, 2)), Some(rat(2, 1)));
        assert_eq!(m.derivative_exact(&rat(9, 10)), Some(rat(1, 2)));
        let v = m.eval_hp(&Hp::from_rat(&rat(2, 5), P), P);
        let want = m.eval_rat(&rat(2, 5)).unwrap();
        assert!(v.sub(&Hp::from_rat(&want, P), P).abs().to_f64() < 1e-60);
    }

    #[test]
    fn inverse_roundtrip_exact() {
        let m = corner_map();
        let inv = m.inverse();
        inv.validate().unwrap();
        for x in [rat(0, 1), rat(1, 5), rat(2, 5), rat(1, 2), rat(9, 10), rat(1, 3)] {
            let y = m.eval_rat(&x).unwrap();
            assert_eq!(inv.eval_rat(&y), Some(x.clone()), "x = {}", rat_to_string(&x));
        }
    }

    #[test]
    fn compose_rotations_exact() {
        let a = PiecewiseMap::rotation(&rat(1, 3));
        let b = PiecewiseMap::rotation(&rat(1, 2));
        let c = a.compose_after(&b);
        assert_eq!(c.eval_rat(&rat(1, 4)), Some(mod1(&rat(13, 12))));
        let m = corner_map();
        let mi = m.compose_after(&PiecewiseMap::identity());
        for x in [rat(1, 7), rat(4, 9), rat(5, 6), rat(0, 1)] {
            assert_eq!(mi.eval_rat(&x), m.eval_rat(&x));
        }
    }

    #[test]
    fn compose_slopes_chain_rule() {
        let m = corner_map();
        let mm = m.compose_after(&m);
        assert_eq!(mm.derivative_exact(&rat(1, 2)), Some(rat(4, 1)));
        for x in [rat(1, 2), rat(47, 100), rat(53, 100), rat(1, 7), rat(11, 12)] {
            let direct = m.eval_rat(&m.eval_rat(&x).unwrap()).unwrap();
            assert_eq!(mm.eval_rat(&x), Some(direct), "x = {}", rat_to_string(&x));
        }
        mm.validate().unwrap();
    }

    #[test]
    fn bump_join_endpoints_exact() {
        let b = BumpJoin {
            lo: rat(9, 20),
            hi: rat(11, 20),
            slope_in: rat(1, 2),
            slope_out: rat(2, 1),
            val_lo: rat(1, 2) - rat(1, 20) * rat(1, 2),
        };
        assert_eq!(b.val_hi(), rat(1, 2) + rat(1, 20) * rat(2, 1));
        let x = Hp::from_rat(&rat(1, 2), P);
        let j = b.jet(&x, 3, P);
        let d1 = j.deriv(1, P).to_f64();
        assert!(d1 > 0.5 && d1 < 2.0, "{d1}");
        let y = b.apply_hp(&x, P);
        let back = b.apply_inv_hp(&y, P);
        assert!(back.sub(&x, P).abs().to_f64() < 1e-55);
        // derivative of the inverse at the image is the reciprocal
        let inv_jet = Prim::BumpInv(b.clone()).jet(&y, 2, P);
        let prod = inv_jet.deriv(1, P).mul(&j.deriv(1, P), P);
        let dd = prod.sub(&Hp::one(), P).abs();
        assert!(dd.to_f64() < 1e-40, "product off by {}", dd.to_f64());
    }

    #[test]
    fn lift_structure() {
        let m = corner_map();
        let l1 = cyclic_lift(&m, HugeInt::from_u64(1, 10), true).unwrap();
        assert!(matches!(l1, MapExpr::Prim(_)));
        let q = HugeInt::from_u64(3, 10);
        let l3 = cyclic_lift(&m, q, true).unwrap();
        assert_eq!(l3.eval_rat(&rat(0, 1), 1024), Some(rat(0, 1)));
        for x in [rat(1, 7), rat(2, 5), rat(13, 17)] {
            let lhs = l3.eval_rat(&mod1(&(&x + rat(1, 3))), 1024).unwrap();
            let rhs = mod1(&(l3.eval_rat(&x, 1024).unwrap() + rat(1, 3)));
            assert_eq!(lhs, rhs, "commutation at {}", rat_to_string(&x));
        }
        let flat = flatten_lift(&m, 3);
        flat.validate().unwrap();
        for x in [rat(1, 7), rat(2, 5), rat(13, 17), rat(31, 33), rat(0, 1)] {
            assert_eq!(flat.eval_rat(&x), l3.eval_rat(&x, 1024), "x = {}", rat_to_string(&x));
        }
    }

    #[test]
    fn huge_lift_is_identity_at_float_precision() {
        let m = corner_map();
        let q = HugeInt::power(10, num_bigint::BigUint::from(10_000u32));
        let l = cyclic_lift(&m, q, true).unwrap();
        let x = Hp::from_rat(&rat(2, 7), P);
        let (v, err) = l.eval_hp_err(&x, P);
        assert!(v.sub(&x, P).abs().is_zero());
        assert!(err < -30_000.0);
    }

    #[test]
    fn chain_jets_match_finite_differences() {
        let m = corner_map();
        let expr = MapExpr::compose(
            MapExpr::Prim(Arc::new(m.clone())).inverse(),
            MapExpr::compose(MapExpr::rotation_rat(&rat(1, 5)), MapExpr::Prim(Arc::new(m))),
        );
        let x = Hp::from_rat(&rat(3, 7), P);
        let j = expr.jet(&x, 1, P).unwrap();
        let h = Hp::from_rat(&rat(1, 1_000_000), P);
        let fp = expr.eval_hp(&x.add(&h, P), P);
        let fm = expr.eval_hp(&x.sub(&h, P), P);
        let fd = fp.sub(&fm, P).div(&h.mul_pow2(1), P);
        assert!((j.deriv(1, P).to_f64() - fd.to_f64()).abs() < 1e-9);
    }

    #[test]
    fn arc_image_exact() {
        let m = corner_map();
        // arc [2/5, 3/5] inside the slope-2 piece: image has length 2/5
        let (a, b) = m.image_of_arc(&rat(2, 5), &rat(3, 5)).unwrap();
        assert_eq!(b - a, rat(2, 5));
        // wrapping arc through the slope-1/2 piece
        let (a2, b2) = m.image_of_arc(&rat(7, 10), &rat(9, 10)).unwrap();
        assert_eq!(b2 - a2, rat(1, 10));
    }
}
