//! Finite-stage ergodic verification: nested level sets, exact measures,
//! derivative cocycles along return orbits, ratio-set membership for each
//! construction family, and the first-return search.
//!
//! All measure and membership statements here are decided in exact rational
//! arithmetic. Derivatives along returns are carried as exponent vectors
//! over the family's slope basis, so membership in `λ^ℤ`, gap laws in
//! `log_3`, and triviality are integer questions, never float ones. When a
//! cover order is too large to enumerate, analysis restricts to one
//! fundamental cell and scales by the cover's translation symmetry; when an
//! angle's denominator is too large to expand, positions are tracked as an
//! exact head plus a sign-definite tail interval.

use crate::construction::{CheckResult, ConstructionTrace};
use crate::error::{CjError, Result};
use crate::generators::{GenTag, StageGenerator};
use crate::hp::Hp;
use crate::mag::{Alpha, HugeInt, Mag};
use crate::maps::{CircleArc, MapExpr};
use crate::rat::{mod1, rat_to_string, Rat};
use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Sign {
    Minus,
    Plus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LevelKind {
    /// intersections of the trimmed cores I±
    X,
    /// intersections of the affine arcs J±
    Y,
    /// steep cores only
    XPlus,
}

/// The tower data the level-set combinatorics depends on: per-stage base
/// generators and cover orders.
pub struct TowerGeometry {
    pub gens: Vec<StageGenerator>,
    pub covers: Vec<HugeInt>,
}

impl TowerGeometry {
    pub fn depth(&self) -> u32 {
        self.gens.len() as u32
    }
}

impl ConstructionTrace {
    pub fn geometry(&self) -> TowerGeometry {
        TowerGeometry {
            gens: self.stages.iter().map(|s| s.generator.clone()).collect(),
            covers: self.stages.iter().map(|s| s.big_q.clone()).collect(),
        }
    }
}

fn stage_arcs(gen: &StageGenerator, kind: LevelKind) -> Vec<(Sign, CircleArc)> {
    match kind {
        LevelKind::X => vec![
            (Sign::Minus, gen.i_minus.clone()),
            (Sign::Plus, gen.i_plus.clone()),
        ],
        LevelKind::Y => vec![
            (Sign::Minus, gen.j_minus.clone()),
            (Sign::Plus, gen.j_plus.clone()),
        ],
        LevelKind::XPlus => vec![(Sign::Plus, gen.i_plus.clone())],
    }
}

/// Exact membership of a circle point in the depth-n level structure:
/// the sign chain (σ_1, …, σ_n) or `None` if some stage rejects it.
pub fn level_signs(geom: &TowerGeometry, n: u32, x: &Rat, kind: LevelKind) -> Option<Vec<Sign>> {
    let mut signs = Vec::with_capacity(n as usize);
    for j in 0..n as usize {
        let y = geom.covers[j].mul_rat_mod1(x);
        let mut found = None;
        for (s, arc) in stage_arcs(&geom.gens[j], kind) {
            if arc.contains(&y) {
                found = Some(s);
                break;
            }
        }
        signs.push(found?);
    }
    Some(signs)
}

/// A depth-n level set, either fully enumerated or restricted to one
/// fundamental cell of the deepest cover with the total count carried
/// structurally.
pub struct LevelSet {
    pub n: u32,
    pub kind: LevelKind,
    /// components, each with its ancestor sign chain
    pub components: Vec<(Vec<Sign>, CircleArc)>,
    /// `None` for a fully enumerated set; `Some(cell)` when restricted
    pub window: Option<CircleArc>,
    /// number of depth-n cells on the whole circle (the deepest cover order)
    pub cells_total: HugeInt,
}

/// Builds the depth-n level set. Enumerates the whole circle when the
/// component count fits the budget, otherwise restricts to the fundamental
/// cell at 0 of the deepest cover.
pub fn build_level_sets(
    geom: &TowerGeometry,
    n: u32,
    kind: LevelKind,
    component_cap: u64,
) -> Result<LevelSet> {
    assert!(n >= 1 && n <= geom.depth());
    let deepest = &geom.covers[n as usize - 1];
    let per_cell = stage_arcs(&geom.gens[n as usize - 1], kind).len() as u64;
    let total_hint = deepest.digits_approx();
    let enumerable = total_hint < 12.0
        && deepest
            .to_uint(64)
            .and_then(|q| q.to_u64())
            .map(|q| q.saturating_mul(per_cell) <= component_cap)
            .unwrap_or(false);
    if enumerable {
        let q = deepest.to_uint(64).unwrap().to_u64().unwrap();
        let mut components = Vec::new();
        let qr = Rat::from_integer(BigInt::from(q));
        for cell in 0..q {
            let cell_lo = Rat::new(BigInt::from(cell), BigInt::from(q));
            for (s, arc) in stage_arcs(&geom.gens[n as usize - 1], kind) {
                let lo = &cell_lo + arc.lo / &qr;
                let hi = &cell_lo + arc.hi / &qr;
                let probe = mod1(&((&lo + &hi) / Rat::from_integer(BigInt::from(2))));
                if let Some(mut signs) = level_signs(geom, n - 1, &probe, kind) {
                    signs.push(s);
                    components.push((signs, CircleArc::new(lo, hi)));
                }
            }
        }
        if components.len() as u64 > component_cap {
            return Err(CjError::ComponentExplosion(format!(
                "{} components exceed the budget {component_cap}",
                components.len()
            )));
        }
        Ok(LevelSet { n, kind, components, window: None, cells_total: deepest.clone() })
    } else {
        // fundamental cell at 0: scale the base arcs into [0, 1/Q_n); the
        // ancestor structure is constant on the cell (alignment), probed at
        // the cell's interior arcs
        let mut components = Vec::new();
        for (s, arc) in stage_arcs(&geom.gens[n as usize - 1], kind) {
            // ancestor signs at the unscaled probe: frac(Q_j·(x/Q_n + …))
            // matches the probe of arc midpoints through the covers
            let probe_base = arc.midpoint();
            let mut signs = Vec::new();
            let mut ok = true;
            for j in 0..(n as usize - 1) {
                // Q_j·(cell-local point)/Q_n: the cell at 0 sits inside the
                // stage-j structure containing 0; 0 itself lies in I_j⁻
                let zero_side = geom.gens[j].i_minus.contains(&Rat::zero());
                if !zero_side {
                    ok = false;
                    break;
                }
                signs.push(Sign::Minus);
            }
            let _ = probe_base;
            if !ok {
                continue;
            }
            signs.push(s);
            components.push((signs, arc.clone()));
        }
        Ok(LevelSet {
            n,
            kind,
            components,
            window: Some(CircleArc::new(Rat::zero(), Rat::one())),
            cells_total: deepest.clone(),
        })
    }
}

// ───────────────────────────────────────────────────────────────────────────
// Exact measures
// ───────────────────────────────────────────────────────────────────────────

/// Two independent exact computations of `m(Ξ_n)` plus the per-class
/// equal-measure data.
pub struct MeasureReport {
    pub n: u32,
    /// product of the stage defect complements
    pub exact: Rat,
    /// interval-image computation through the actual maps
    pub direct: Rat,
    pub matches: bool,
    /// partial products `∏_{j≤k}(1−δ'_j)` for k = 1..n
    pub partials: Vec<Rat>,
    /// per sign-chain class: (chain, Q_n times the exact measure of one
    /// component's conjugator image, structural component count)
    pub class_measures: Vec<(Vec<Sign>, Rat, Mag)>,
    /// every class count is an exact integer and the class decomposition
    /// reassembles the direct measure
    pub class_decomposition_ok: bool,
}

/// Exact measure of the image `ĥ(arc)` from the map's piece data.
fn image_measure(gen: &StageGenerator, arc: &CircleArc) -> Result<Rat> {
    let (lo, hi) = (mod1(&arc.lo), mod1(&arc.hi));
    let (a, b) = gen.map.image_of_arc(&lo, &hi).ok_or_else(|| {
        CjError::GeometryInfeasible("core arc endpoints must evaluate exactly".into())
    })?;
    Ok(b - a)
}

/// `m(Ξ_n)`: the product formula against the direct interval-image route.
///
/// The direct route multiplies, stage by stage, the exact image measures of
/// the surviving cores through the actual piecewise maps, after certifying
/// the alignment (every earlier boundary sits on the deeper cover's grid)
/// that makes the factorization exact. Both sides are exact rationals and
/// the verdict is exact equality.
pub fn xi_measure(trace: &ConstructionTrace, n: u32) -> Result<MeasureReport> {
    assert!(n >= 1 && n <= trace.depth());
    let geom = trace.geometry();
    // alignment certificates between consecutive stages
    for k in 1..n as usize {
        let prev = &trace.stages[k - 1];
        let d = prev
            .big_q
            .mul_uint(&prev.generator.k_prime)
            .to_uint(trace.config.budgets.materialize_bits)
            .ok_or_else(|| CjError::ComponentExplosion("alignment modulus beyond budget".into()))?;
        if !trace.stages[k].big_q.divisible_by(&d) {
            return Err(CjError::GeometryInfeasible(format!(
                "cover chain broken between stages {k} and {}",
                k + 1
            )));
        }
    }
    let mut exact = Rat::one();
    let mut partials = Vec::new();
    for j in 0..n as usize {
        exact *= Rat::one() - &geom.gens[j].delta_prime;
        partials.push(exact.clone());
    }
    // direct: per-stage core image sums from the actual maps
    let mut direct = Rat::one();
    let mut stage_sides: Vec<[(Sign, Rat, Rat); 2]> = Vec::new();
    for g in geom.gens.iter().take(n as usize) {
        let im = image_measure(g, &g.i_minus)?;
        let ip = image_measure(g, &g.i_plus)?;
        direct *= &im + &ip;
        stage_sides.push([
            (Sign::Minus, g.i_minus.len(), im),
            (Sign::Plus, g.i_plus.len(), ip),
        ]);
    }
    // per-class data: a depth-n component of the conjugator image in class
    // (σ_1..σ_n) has measure [∏_{j<n} s_{σ_j}]·m(ĥ_n(I_n^{σ_n}-arc))/Q_n,
    // identical within the class; its count is Q_n·∏_{j<n} m(I_j^{σ_j})
    let mut class_measures = Vec::new();
    let mut reassembled = Rat::zero();
    let mut counts_ok = true;
    let chains = sign_chains(n as usize);
    let qn = &geom.covers[n as usize - 1];
    for chain in chains {
        let mut slope_factor = Rat::one();
        let mut count_frac = Rat::one();
        for (j, s) in chain.iter().enumerate().take(n as usize - 1) {
            let g = &geom.gens[j];
            slope_factor *= match s {
                Sign::Minus => g.shallow_slope.clone(),
                Sign::Plus => g.steep_slope.clone(),
            };
            count_frac *= match s {
                Sign::Minus => g.i_minus.len(),
                Sign::Plus => g.i_plus.len(),
            };
        }
        let last = chain[n as usize - 1];
        let last_img = stage_sides[n as usize - 1]
            .iter()
            .find(|(s, _, _)| *s == last)
            .map(|(_, _, im)| im.clone())
            .unwrap();
        // measure of one component (before multiplying by the count):
        let one_comp_times_qn = &slope_factor * &last_img;
        // count = Q_n·count_frac must be an exact integer
        let count_exact = qn.mul_rat_mod1(&count_frac);
        if !count_exact.is_zero() {
            counts_ok = false;
        }
        reassembled += &count_frac * &one_comp_times_qn;
        // structural count Q_n·count_frac as an exact scaled rational (the
        // per-component measure keeps the 1/Q_n factor folded into it)
        let count_struct = qn.to_mag().mul(&Mag::from_rat(&count_frac, qn.base));
        class_measures.push((chain, one_comp_times_qn, count_struct));
    }
    let matches = exact == direct;
    let class_decomposition_ok = counts_ok && reassembled == direct;
    Ok(MeasureReport {
        n,
        exact,
        direct,
        matches,
        partials,
        class_measures,
        class_decomposition_ok,
    })
}

fn sign_chains(n: usize) -> Vec<Vec<Sign>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::with_capacity(out.len() * 2);
        for c in out {
            let mut a = c.clone();
            a.push(Sign::Minus);
            next.push(a);
            let mut b = c;
            b.push(Sign::Plus);
            next.push(b);
        }
        out = next;
    }
    out
}

// ───────────────────────────────────────────────────────────────────────────
// Derivative cocycles
// ───────────────────────────────────────────────────────────────────────────

/// A derivative along a return orbit, stored as an exponent vector over the
/// family's slope basis (never a float).
#[derive(Clone, Debug, PartialEq)]
pub struct CocycleValue {
    /// basis symbol names (shared across a trace)
    pub basis: Vec<String>,
    pub exps: Vec<i64>,
    /// exact resolved value (product of basis powers)
    pub value: Rat,
    /// false when some factor fell into a smoothing window
    pub all_affine: bool,
}

impl CocycleValue {
    pub fn identity(basis: Vec<String>) -> CocycleValue {
        let exps = vec![0; basis.len()];
        CocycleValue { basis, exps, value: Rat::one(), all_affine: true }
    }

    pub fn is_trivial(&self) -> bool {
        self.exps.iter().all(|e| *e == 0)
    }

    pub fn mul(&self, other: &CocycleValue) -> CocycleValue {
        assert_eq!(self.basis, other.basis);
        CocycleValue {
            basis: self.basis.clone(),
            exps: self.exps.iter().zip(other.exps.iter()).map(|(a, b)| a + b).collect(),
            value: &self.value * &other.value,
            all_affine: self.all_affine && other.all_affine,
        }
    }

    pub fn inverse(&self) -> CocycleValue {
        CocycleValue {
            basis: self.basis.clone(),
            exps: self.exps.iter().map(|e| -e).collect(),
            value: self.value.recip(),
            all_affine: self.all_affine,
        }
    }

    pub fn value_hp(&self, prec: u32) -> Hp {
        Hp::from_rat(&self.value, prec)
    }
}

fn trace_basis(trace: &ConstructionTrace) -> Vec<(String, Rat)> {
    crate::generators::basis_of_tag(&trace.family)
}

/// Slope factor of stage k at the circle point x, as basis exponents.
/// `None` when x falls outside the affine arcs (smoothing window).
fn stage_slope_exps(trace: &ConstructionTrace, k: usize, x: &Rat) -> Option<Vec<i64>> {
    let g = &trace.stages[k].generator;
    let y = trace.stages[k].big_q.mul_rat_mod1(x);
    if g.j_plus.contains(&y) {
        Some(g.steep_exps.clone())
    } else if g.j_minus.contains(&y) {
        Some(g.shallow_exps.clone())
    } else {
        None
    }
}

/// Transport by the tail of the tower: `h_{k+1}∘…∘h_n` applied exactly.
fn transport_tail(trace: &ConstructionTrace, from_k: usize, n: usize, x: &Rat) -> Option<Rat> {
    let max_bits = trace.config.budgets.materialize_bits;
    let mut cur = x.clone();
    for j in (from_k..n).rev() {
        let s = &trace.stages[j];
        let h = crate::maps::cyclic_lift(&s.generator.map, s.big_q.clone(), true).ok()?;
        cur = h.eval_rat(&cur, max_bits)?;
    }
    Some(cur)
}

/// The derivative of `f_n^i` at `ξ = H_n(x)` as a product of per-stage slope
/// factors:
/// `∏_k h_k'(y_k) / ∏_k h_k'(x_k)` with `x_n = x`, `y_n = x + i·α_{n+1}`,
/// and `x_k, y_k` the transports up the tower. All factors are exact slope
/// lookups; a factor in a smoothing window flags the value as non-affine.
pub fn derivative_cocycle(
    trace: &ConstructionTrace,
    n: u32,
    x: &Rat,
    i: &BigInt,
    _orbit_cap: u64,
) -> Result<CocycleValue> {
    let basis = trace_basis(trace);
    let names: Vec<String> = basis.iter().map(|b| b.0.clone()).collect();
    if i.is_zero() {
        return Ok(CocycleValue::identity(names));
    }
    let alpha = trace.alpha_after(n);
    let alpha_rat = alpha.to_plain_rat().ok_or_else(|| {
        CjError::PrecisionExhausted("cocycle transport needs a materializable angle".into())
    })?;
    let shift = mod1(&(Rat::from_integer(i.clone()) * alpha_rat));
    let y_n = mod1(&(x + shift));
    let mut exps = vec![0i64; names.len()];
    let mut value = Rat::one();
    let mut all_affine = true;
    for k in 0..n as usize {
        let xk = transport_tail(trace, k + 1, n as usize, x).ok_or_else(|| {
            CjError::PrecisionExhausted("transport not exactly representable".into())
        })?;
        let yk = transport_tail(trace, k + 1, n as usize, &y_n).ok_or_else(|| {
            CjError::PrecisionExhausted("transport not exactly representable".into())
        })?;
        for (pt, dir) in [(yk, 1i64), (xk, -1i64)] {
            match stage_slope_exps(trace, k, &pt) {
                Some(e) => {
                    for (idx, v) in e.iter().enumerate() {
                        exps[idx] += dir * v;
                    }
                    let g = &trace.stages[k].generator;
                    let y = trace.stages[k].big_q.mul_rat_mod1(&pt);
                    let slope = if g.j_plus.contains(&y) {
                        g.steep_slope.clone()
                    } else {
                        g.shallow_slope.clone()
                    };
                    value *= if dir == 1 { slope } else { slope.recip() };
                }
                None => {
                    all_affine = false;
                }
            }
        }
    }
    Ok(CocycleValue { basis: names, exps, value, all_affine })
}

/// Numeric cross-check of a cocycle value: centered finite difference of
/// `f_n^i = H_n∘R^i∘H_n⁻¹` at ξ.
pub fn cocycle_numeric_check(
    trace: &ConstructionTrace,
    n: u32,
    x: &Rat,
    i: &BigInt,
    cocycle: &CocycleValue,
    prec: u32,
) -> Result<f64> {
    let alpha = trace.alpha_after(n);
    let alpha_rat = alpha
        .to_plain_rat()
        .ok_or_else(|| CjError::PrecisionExhausted("needs a materializable angle".into()))?;
    let shift = mod1(&(Rat::from_integer(i.clone()) * alpha_rat));
    let h = trace.big_h(n);
    let f_iter = MapExpr::compose(
        h.clone(),
        MapExpr::compose(MapExpr::rotation_rat(&shift), h.inverse()),
    );
    let xi = h
        .eval_rat(x, trace.config.budgets.materialize_bits)
        .ok_or_else(|| CjError::PrecisionExhausted("base point not exact".into()))?;
    let xi_hp = Hp::from_rat(&xi, prec);
    let step = Hp::one().mul_pow2(-((prec / 3) as i64));
    let fp = f_iter.eval_hp(&xi_hp.add(&step, prec), prec);
    let fm = f_iter.eval_hp(&xi_hp.sub(&step, prec), prec);
    let mut dv = fp.sub(&fm, prec);
    // crossing the wrap gives a spurious ±1
    if dv.to_f64().abs() > 0.5 {
        let one = Hp::one();
        dv = if dv.is_negative() { dv.add(&one, prec) } else { dv.sub(&one, prec) };
    }
    let fd = dv.div(&step.mul_pow2(1), prec);
    let exact = cocycle.value_hp(prec);
    let rel = fd.sub(&exact, prec).div(&exact, prec).abs().to_f64();
    Ok(rel)
}

// ───────────────────────────────────────────────────────────────────────────
// Orbit scans and ratio membership
// ───────────────────────────────────────────────────────────────────────────

/// One scanned return: base point, orbit index, cocycle, verdict.
pub struct ReturnRow {
    pub x: Rat,
    pub i: BigInt,
    pub cocycle: CocycleValue,
    pub ok: bool,
    pub note: String,
}

pub struct MembershipReport {
    pub family: String,
    pub n: u32,
    pub scanned: u64,
    pub returns_checked: u64,
    pub violations: Vec<ReturnRow>,
    pub rows: Vec<ReturnRow>,
    /// family-specific evidence (distinct symbols hit, minimal gaps, …)
    pub notes: Vec<String>,
}

impl MembershipReport {
    pub fn clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn family_verdict(tag: &GenTag, c: &CocycleValue, n: u32) -> (bool, String) {
    match tag {
        GenTag::IiiLambda { .. } => {
            // value ∈ λ^ℤ ⇔ the √λ exponent is even
            let ok = c.exps[0].rem_euclid(2) == 0;
            (ok, format!("sqrt-exponent {}", c.exps[0]))
        }
        GenTag::IiiInfty { .. } => (true, format!("exponents {:?}", c.exps)),
        GenTag::Iii0 { .. } => {
            // |log_3| is zero or at least 3^{n−1}
            let gap = 3i64.pow(n.saturating_sub(1));
            let l = c.exps[0];
            (l == 0 || l.abs() >= gap, format!("log3 = {l}, floor {gap}"))
        }
        GenTag::IiInfty { .. } => (c.is_trivial(), format!("exponent {}", c.exps[0])),
    }
}

/// Scans return orbits of `f_n` over the level structure and checks every
/// derivative cocycle against the family's ratio-set law.
///
/// Sample points are core-component midpoints within one fundamental cell
/// (plus their translates); orbit indices run to the configured cap. For the
/// balanced family the scan restricts to the steep cores.
/// Scans return orbits of `f_n` over the level structure and checks every
/// derivative cocycle against the family's ratio-set law.
///
/// Sample points are core-component midpoints inside a handful of cells;
/// orbit indices run to the configured cap. The scan walks positions as
/// integer numerators over one common denominator, so membership at every
/// stage is an exact integer comparison per step. Because every deeper
/// cover fixes the earlier boundary structure, the cocycle factors depend
/// only on the endpoint sign chains; a sample of hits is independently
/// re-derived through the exact transport route as a cross-check.
pub fn ratio_membership(trace: &ConstructionTrace, n: u32, samples: u64) -> Result<MembershipReport> {
    let geom = trace.geometry();
    let kind = match trace.family {
        GenTag::IiInfty { .. } => LevelKind::XPlus,
        _ => LevelKind::X,
    };
    let alpha = trace.alpha_after(n);
    let orbit_cap = trace.config.budgets.orbit_cap;
    let base_points = scan_base_points(trace, &geom, n, kind, samples)?;
    let (head, tail_hi) = alpha_head_tail(alpha, &geom.covers[n as usize - 1])?;
    let basis_names: Vec<String> = trace_basis(trace).iter().map(|b| b.0.clone()).collect();
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let mut scanned = 0u64;
    let mut returns_checked = 0u64;
    let mut notes = Vec::new();
    let mut spot_checks = 0u32;

    for x in &base_points {
        let x_signs = match level_signs(&geom, n, x, kind) {
            Some(sg) => sg,
            None => continue,
        };
        let mut scanner = OrbitScanner::new(&geom, n, kind, x, &head, &tail_hi, orbit_cap)?;
        for i in 1..=orbit_cap {
            scanned += 1;
            match scanner.advance() {
                ScanStep::Inside(y_signs) => {
                    returns_checked += 1;
                    let c = cocycle_from_signs(trace, &basis_names, &y_signs, &x_signs);
                    let (ok, note) = family_verdict(&trace.family, &c, n);
                    // cross-check a few hits through the exact transports
                    if spot_checks < 4 && tail_hi.is_zero() {
                        let ii = BigInt::from(i);
                        if let Ok(direct) = derivative_cocycle(trace, n, x, &ii, orbit_cap) {
                            if direct.all_affine && direct.exps != c.exps {
                                return Err(CjError::GeometryInfeasible(format!(
                                    "sign-chain cocycle {:?} disagrees with transported {:?} at i={i}",
                                    c.exps, direct.exps
                                )));
                            }
                            spot_checks += 1;
                        }
                    }
                    let row = ReturnRow { x: x.clone(), i: BigInt::from(i), cocycle: c, ok, note };
                    if !ok {
                        violations.push(ReturnRow {
                            x: row.x.clone(),
                            i: row.i.clone(),
                            cocycle: row.cocycle.clone(),
                            ok,
                            note: row.note.clone(),
                        });
                    }
                    if rows.len() < 50_000 {
                        rows.push(row);
                    }
                }
                ScanStep::Outside => {}
            }
        }
    }
    if let GenTag::IiiInfty { .. } = trace.family {
        let mut seen = vec![false; basis_names.len()];
        for r in &rows {
            for (idx, e) in r.cocycle.exps.iter().enumerate() {
                if *e != 0 {
                    seen[idx] = true;
                }
            }
        }
        notes.push(format!(
            "nonzero exponents observed for symbols: {:?}",
            seen.iter()
                .enumerate()
                .filter(|(_, s)| **s)
                .map(|(i, _)| basis_names[i].clone())
                .collect::<Vec<_>>()
        ));
    }
    Ok(MembershipReport {
        family: format!("{:?}", trace.family),
        n,
        scanned,
        returns_checked,
        violations,
        rows,
        notes,
    })
}

/// Cocycle from endpoint sign chains: deeper covers fix earlier boundary
/// points, so transports never change a point's stage-k component and the
/// slope factors are read off the chains directly.
fn cocycle_from_signs(
    trace: &ConstructionTrace,
    basis_names: &[String],
    y_signs: &[Sign],
    x_signs: &[Sign],
) -> CocycleValue {
    let mut exps = vec![0i64; basis_names.len()];
    let mut value = Rat::one();
    for (k, (ys, xs)) in y_signs.iter().zip(x_signs.iter()).enumerate() {
        let g = &trace.stages[k].generator;
        for (s, dir) in [(ys, 1i64), (xs, -1i64)] {
            let e = match s {
                Sign::Plus => &g.steep_exps,
                Sign::Minus => &g.shallow_exps,
            };
            for (idx, v) in e.iter().enumerate() {
                exps[idx] += dir * v;
            }
            let slope = match s {
                Sign::Plus => g.steep_slope.clone(),
                Sign::Minus => g.shallow_slope.clone(),
            };
            value *= if dir == 1 { slope } else { slope.recip() };
        }
    }
    CocycleValue { basis: basis_names.to_vec(), exps, value, all_affine: true }
}

enum ScanStep {
    Inside(Vec<Sign>),
    Outside,
}

/// Incremental orbit walk: all positions are integer numerators over one
/// common denominator; each step advances every stage's cell coordinate by
/// one modular addition.
struct OrbitScanner {
    m: BigUint,
    stages: Vec<StageScan>,
}

struct StageScan {
    y: BigUint,
    step: BigUint,
    /// (sign, scaled lo, scaled hi, wraps) with the worst-case tail margin
    /// already folded into the bounds
    arcs: Vec<(Sign, BigUint, BigUint, bool)>,
}

impl OrbitScanner {
    fn new(
        geom: &TowerGeometry,
        n: u32,
        kind: LevelKind,
        x: &Rat,
        head: &Rat,
        tail_hi: &Rat,
        orbit_cap: u64,
    ) -> Result<OrbitScanner> {
        // common denominator clearing x, the head angle, and the arc bounds
        let mut m = x.denom().magnitude().clone();
        m = m.lcm(head.denom().magnitude());
        for (j, g) in geom.gens.iter().take(n as usize).enumerate() {
            m = m.lcm(&g.k_prime);
            let _ = j;
        }
        let mr = Rat::from_integer(BigInt::from(m.clone()));
        let to_scaled = |r: &Rat| -> BigUint {
            let v = r * &mr;
            assert!(v.denom().is_one(), "common denominator must clear all bounds");
            v.numer().magnitude().clone()
        };
        let mut stages = Vec::new();
        for (j, g) in geom.gens.iter().take(n as usize).enumerate() {
            let q = &geom.covers[j];
            let y = to_scaled(&q.mul_rat_mod1(x));
            let step = to_scaled(&q.mul_rat_mod1(head));
            // worst-case tail margin over the whole scan, rounded up
            let margin_rat = q
                .to_uint(4_000_000)
                .map(|qq| Rat::from_integer(BigInt::from(qq)) * tail_hi * &mr
                    * Rat::from_integer(BigInt::from(orbit_cap)))
                .ok_or_else(|| {
                    CjError::ComponentExplosion("cover too large for the orbit scan".into())
                })?;
            let margin = margin_rat.ceil().to_integer().magnitude().clone();
            let mut arcs = Vec::new();
            for (s, arc) in stage_arcs(g, kind) {
                let lo = to_scaled(&arc.lo) + &margin;
                let hi_raw = to_scaled(&arc.hi);
                if hi_raw < margin {
                    continue;
                }
                let hi = hi_raw - &margin;
                let wraps = hi > m;
                if lo >= hi {
                    continue;
                }
                arcs.push((s, lo, hi, wraps));
            }
            stages.push(StageScan { y, step, arcs });
        }
        Ok(OrbitScanner { m, stages })
    }

    fn advance(&mut self) -> ScanStep {
        let mut signs = Vec::with_capacity(self.stages.len());
        for st in self.stages.iter_mut() {
            st.y += &st.step;
            if st.y >= self.m {
                st.y -= &self.m;
            }
        }
        for st in &self.stages {
            let mut found = None;
            for (s, lo, hi, wraps) in &st.arcs {
                let inside = if *wraps {
                    // arc [lo, hi] with hi > m covers [lo, m) ∪ [0, hi − m]
                    st.y >= *lo || st.y <= hi - &self.m
                } else {
                    st.y >= *lo && st.y <= *hi
                };
                if inside {
                    found = Some(*s);
                    break;
                }
            }
            match found {
                Some(s) => signs.push(s),
                None => return ScanStep::Outside,
            }
        }
        ScanStep::Inside(signs)
    }
}

/// Builds a point realizing the requested sign chain: the deepest stage
/// sits at a core midpoint and each coarser stage's cell index is steered
/// greedily (exact, by the divisibility chain of the cover orders).
fn point_with_chain(
    geom: &TowerGeometry,
    n: u32,
    chain: &[Sign],
    kind: LevelKind,
    jitter: u64,
    max_bits: u64,
) -> Option<Rat> {
    let qn = geom.covers[n as usize - 1].to_uint(max_bits)?;
    let arc_of = |j: usize, s: Sign| -> CircleArc {
        stage_arcs(&geom.gens[j], kind)
            .into_iter()
            .find(|(ss, _)| *ss == s)
            .map(|(_, a)| a)
            .unwrap()
    };
    let mut a = BigUint::from(jitter);
    for j in 0..(n as usize - 1) {
        let qj = geom.covers[j].to_uint(max_bits)?;
        let r = &qn / &qj; // exact by the cover chain
        let mid = arc_of(j, chain[j]).midpoint();
        let target = (mid * Rat::from_integer(BigInt::from(r.clone())))
            .floor()
            .to_integer()
            .magnitude()
            .clone();
        let cur = &a % &r;
        let adjust = if target >= cur { &target - &cur } else { &r - &cur + &target };
        a += adjust;
    }
    let mid_n = arc_of(n as usize - 1, chain[n as usize - 1]).midpoint();
    let x = mod1(&((Rat::from_integer(BigInt::from(a)) + mid_n)
        / Rat::from_integer(BigInt::from(qn))));
    // exact confirmation of the realized chain
    let got = level_signs(geom, n, &x, kind)?;
    if got == chain {
        Some(x)
    } else {
        None
    }
}

fn scan_base_points(
    trace: &ConstructionTrace,
    geom: &TowerGeometry,
    n: u32,
    kind: LevelKind,
    samples: u64,
) -> Result<Vec<Rat>> {
    let max_bits = trace.config.budgets.materialize_bits;
    if geom.covers[n as usize - 1].to_uint(max_bits).is_none() {
        return Err(CjError::ComponentExplosion(
            "orbit scan needs a materializable deepest cover".into(),
        ));
    }
    let chains: Vec<Vec<Sign>> = match kind {
        LevelKind::XPlus => vec![vec![Sign::Plus; n as usize]],
        _ => sign_chains(n as usize),
    };
    let mut out = Vec::new();
    for chain in &chains {
        for jitter in 0..samples.max(1).min(8) {
            if let Some(x) = point_with_chain(geom, n, chain, kind, jitter, max_bits) {
                out.push(x);
            }
        }
    }
    if out.is_empty() {
        return Err(CjError::ComponentExplosion("no scan base points found".into()));
    }
    Ok(out)
}

/// Head/tail split of a structural angle: exact head `T_J` with the dropped
/// tail in `(0, tail_hi]`, where `J` is deep enough that the head resolves
/// the cover's cell arithmetic exactly.
fn alpha_head_tail(alpha: &Alpha, cover: &HugeInt) -> Result<(Rat, Rat)> {
    match alpha {
        Alpha::Plain(r) => Ok((r.clone(), Rat::zero())),
        Alpha::FactorialTail { base, k } => {
            let cover_digits = cover.digits_approx();
            let mut j = 2u32;
            while crate::mag::factorial(j + 1).to_f64().unwrap_or(f64::MAX)
                < (cover_digits + 64.0) * 4.0
                && j < *k
            {
                j += 1;
            }
            let head = Alpha::FactorialTail { base: *base, k: j.min(*k) }
                .to_plain_rat()
                .ok_or_else(|| CjError::PrecisionExhausted("head too deep".into()))?;
            if j >= *k {
                return Ok((head, Rat::zero()));
            }
            let e = crate::mag::factorial(j + 1)
                .to_u32()
                .ok_or_else(|| CjError::PrecisionExhausted("tail exponent overflow".into()))?;
            let tail_hi = Rat::new(BigInt::from(2), BigInt::from(BigUint::from(*base).pow(e)));
            Ok((head, tail_hi))
        }
    }
}

// ───────────────────────────────────────────────────────────────────────────
// First-return search
// ───────────────────────────────────────────────────────────────────────────

#[derive(Debug)]
pub struct ReturnPair {
    pub xi: Rat,
    pub x: Rat,
    pub i: BigInt,
    pub cocycle: CocycleValue,
}

/// Searches for a return pair realizing the target derivative: midpoints of
/// a shallow-core and a steep-core component inside one fundamental cell,
/// aligned by a rotation power that maps one containing `q_{n+1}`-interval
/// onto the other. The lattice makes the derivative exactly the steep/shallow
/// slope ratio of stage n.
pub fn find_return_pair(
    trace: &ConstructionTrace,
    n: u32,
    target_exps: &[i64],
) -> Result<ReturnPair> {
    let geom = trace.geometry();
    let basis = trace_basis(trace);
    let names: Vec<String> = basis.iter().map(|b| b.0.clone()).collect();
    if target_exps.iter().all(|e| *e == 0) {
        let x = trace.stages[0].generator.i_minus.midpoint();
        let xi = trace.big_h(n).eval_rat(&x, trace.config.budgets.materialize_bits).unwrap_or(x.clone());
        return Ok(ReturnPair {
            xi,
            x,
            i: BigInt::zero(),
            cocycle: CocycleValue::identity(names),
        });
    }
    let g = &trace.stages[n as usize - 1].generator;
    let expect: Vec<i64> = g
        .steep_exps
        .iter()
        .zip(g.shallow_exps.iter())
        .map(|(a, b)| a - b)
        .collect();
    if expect != target_exps {
        return Err(CjError::SearchBudgetExceeded(format!(
            "target {:?} is outside the stage-{n} exponent lattice (reachable: {:?})",
            target_exps, expect
        )));
    }
    let max_bits = trace.config.budgets.materialize_bits;
    let qn = trace.stages[n as usize - 1]
        .big_q
        .to_uint(max_bits)
        .ok_or_else(|| CjError::ComponentExplosion("cover order beyond enumeration".into()))?;
    let q_next = trace
        .q_after(n)
        .to_uint(max_bits)
        .ok_or_else(|| CjError::ComponentExplosion("next denominator beyond enumeration".into()))?;
    let alpha = trace
        .alpha_after(n)
        .to_plain_rat()
        .ok_or_else(|| CjError::ComponentExplosion("angle beyond materialization".into()))?;
    let p_next = (&alpha * Rat::from_integer(BigInt::from(q_next.clone())))
        .to_integer()
        .magnitude()
        .clone();
    // midpoints in the fundamental cell at 0 (cell 0 sits in the shallow core)
    let qr = Rat::from_integer(BigInt::from(qn.clone()));
    let x_mid = mod1(&(g.i_minus.midpoint() / &qr));
    let y_mid = mod1(&(g.i_plus.midpoint() / &qr));
    if level_signs(&geom, n, &x_mid, LevelKind::X).is_none()
        || level_signs(&geom, n, &y_mid, LevelKind::X).is_none()
    {
        return Err(CjError::SearchBudgetExceeded(
            "cell-0 midpoints escaped the level structure (condition 1 failed)".into(),
        ));
    }
    // q_{n+1}-interval alignment: i·p ≡ Δj (mod q)
    let qn_big = BigInt::from(q_next.clone());
    let j1 = (&x_mid * Rat::from_integer(qn_big.clone())).floor().to_integer();
    let j2 = (&y_mid * Rat::from_integer(qn_big.clone())).floor().to_integer();
    let dj = (&j2 - &j1).mod_floor(&qn_big);
    let p_inv = modinv(&p_next, &q_next).ok_or_else(|| {
        CjError::SearchBudgetExceeded("rotation numerator not invertible (condition 3 failed)".into())
    })?;
    let i = (dj * BigInt::from(p_inv)).mod_floor(&qn_big);
    // pull the exact partner back: x' = y_mid − i·α lands in the shallow
    // component next to x_mid
    let shift = mod1(&(Rat::from_integer(i.clone()) * &alpha));
    let x_prime = mod1(&(&y_mid - shift));
    if level_signs(&geom, n, &x_prime, LevelKind::X)
        != level_signs(&geom, n, &x_mid, LevelKind::X)
    {
        return Err(CjError::SearchBudgetExceeded(
            "aligned partner left the source component (condition 4 failed)".into(),
        ));
    }
    let cocycle = derivative_cocycle(trace, n, &x_prime, &i, trace.config.budgets.orbit_cap)?;
    if cocycle.exps != target_exps || !cocycle.all_affine {
        return Err(CjError::SearchBudgetExceeded(format!(
            "realized cocycle {:?} missed the target (condition 5 failed)",
            cocycle.exps
        )));
    }
    let xi = trace
        .big_h(n)
        .eval_rat(&x_prime, max_bits)
        .ok_or_else(|| CjError::ComponentExplosion("conjugator image not exact".into()))?;
    Ok(ReturnPair { xi, x: x_prime, i, cocycle })
}

fn modinv(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    let e = BigInt::from(a.clone()).extended_gcd(&BigInt::from(m.clone()));
    if !e.gcd.is_one() {
        return None;
    }
    Some(e.x.mod_floor(&BigInt::from(m.clone())).magnitude().clone())
}

// ───────────────────────────────────────────────────────────────────────────
// Rotation number and the singularity diagnostic
// ───────────────────────────────────────────────────────────────────────────

/// Birkhoff estimate of the translation number with the standard two-sided
/// error `1/iterates`.
pub fn rotation_number(f: &MapExpr, iterates: u64, prec: u32) -> (Hp, f64) {
    assert!(iterates >= 1);
    let mut x = Hp::from_f64(0.17);
    let mut acc = Hp::zero();
    for _ in 0..iterates {
        let fx = f.eval_hp(&x, prec);
        let mut d = fx.sub(&x, prec).frac(prec);
        if d.is_negative() {
            d = d.add(&Hp::one(), prec);
        }
        acc = acc.add(&d, prec);
        x = fx;
    }
    (acc.div(&Hp::from_i64(iterates as i64), prec), 1.0 / iterates as f64)
}

pub struct SingularityReport {
    /// (m(X_k⁺), m(Ξ_k⁺)) for k = 1..n, exact
    pub pairs: Vec<(Rat, Rat)>,
    pub core_strictly_decreasing: bool,
    pub image_lower_bound: Rat,
    pub checks: Vec<CheckResult>,
}

/// The balanced family's singularity evidence: the steep cores shrink to a
/// null set while their images keep almost full measure.
pub fn singularity_diagnostic(trace: &ConstructionTrace, n: u32) -> Result<SingularityReport> {
    if !matches!(trace.family, GenTag::IiInfty { .. }) {
        return Err(CjError::Config("singularity diagnostic applies to the balanced family".into()));
    }
    let geom = trace.geometry();
    let mut pairs = Vec::new();
    let mut core = Rat::one();
    let mut image = Rat::one();
    for g in geom.gens.iter().take(n as usize) {
        core *= g.i_plus.len();
        image *= image_measure(g, &g.i_plus)?;
        pairs.push((core.clone(), image.clone()));
    }
    let mut dec = true;
    for w in pairs.windows(2) {
        if w[1].0 >= w[0].0 {
            dec = false;
        }
    }
    let mut checks = Vec::new();
    checks.push(CheckResult::of(
        "core_measure_decreasing",
        dec,
        pairs.iter().map(|p| rat_to_string(&p.0)).collect::<Vec<_>>().join(" > "),
    ));
    let lower = pairs.last().map(|p| p.1.clone()).unwrap_or_else(Rat::one);
    checks.push(CheckResult::of(
        "image_measure_positive",
        lower.is_positive(),
        format!("m(Ξ_n⁺) = {}", rat_to_string(&lower)),
    ));
    Ok(SingularityReport {
        pairs,
        core_strictly_decreasing: dec,
        image_lower_bound: lower,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BudgetCfg, PrecisionCfg, RunConfig};
    use crate::construction::run;
    use crate::oracle::{OracleSpec, PlantedQuotientOracle};
    use crate::rat::rat;
    use std::sync::{Arc, OnceLock};

    fn planted_cfg(kind: &str, stages: u32, offset: u32) -> RunConfig {
        RunConfig {
            kind: kind.into(),
            lambda: Some("4".into()),
            lambda1: None,
            lambda2: None,
            r: 1,
            max_stages: stages,
            oracle: OracleSpec::PlantedQuotients { base: 10, ramp: 8 },
            precision: PrecisionCfg { mantissa_bits: 256, grid0: 128, max_passes: 3, rel_tol: 1e-6 },
            budgets: BudgetCfg { denominator_digits: 1e6, orbit_cap: 2000, ..Default::default() },
            target_product: "9/10".into(),
            stage_index_offset: offset,
            seed: 1,
        }
    }

    fn lambda_trace() -> &'static ConstructionTrace {
        static T: OnceLock<ConstructionTrace> = OnceLock::new();
        T.get_or_init(|| {
            let cfg = planted_cfg("III_lambda", 2, 0);
            let tr = run(&cfg, Arc::new(PlantedQuotientOracle::new(10, 8))).unwrap();
            assert!(tr.overall_pass(), "{:?}", tr.failure);
            tr
        })
    }

    fn ii_inf_trace() -> &'static ConstructionTrace {
        static T: OnceLock<ConstructionTrace> = OnceLock::new();
        T.get_or_init(|| {
            let cfg = planted_cfg("II_inf", 2, 3);
            let tr = run(&cfg, Arc::new(PlantedQuotientOracle::new(10, 8))).unwrap();
            assert!(tr.overall_pass(), "{:?}", tr.failure);
            tr
        })
    }

    fn iii0_trace() -> &'static ConstructionTrace {
        static T: OnceLock<ConstructionTrace> = OnceLock::new();
        T.get_or_init(|| {
            let cfg = planted_cfg("III_0", 2, 0);
            let tr = run(&cfg, Arc::new(PlantedQuotientOracle::new(10, 8))).unwrap();
            assert!(tr.overall_pass(), "{:?}", tr.failure);
            tr
        })
    }

    /// Synthetic small tower for honest component enumeration.
    fn toy_geometry() -> TowerGeometry {
        let g1 = crate::generators::make_stage_iii_lambda(&rat(4, 1), &rat(1, 100), 300).unwrap();
        let g2 = crate::generators::make_stage_iii_lambda(&rat(4, 1), &rat(1, 1000), 3000).unwrap();
        // covers chosen with the exact divisibility the construction enforces:
        // Q1 = 7, Q2 = Q1·K'(1)·q2 with q2 = 11
        let q1 = HugeInt::from_u64(7, 10);
        let k2 = 7u64 * 300;
        let q2 = HugeInt::from_u64(k2 * 11, 10);
        TowerGeometry { gens: vec![g1, g2], covers: vec![q1, q2] }
    }

    #[test]
    fn toy_level_sets_enumerate_and_nest() {
        let geom = toy_geometry();
        let l1 = build_level_sets(&geom, 1, LevelKind::X, 1_000_000).unwrap();
        assert!(l1.window.is_none());
        assert_eq!(l1.components.len(), 2 * 7);
        let l2 = build_level_sets(&geom, 2, LevelKind::X, 1_000_000).unwrap();
        assert_eq!(l2.window, None);
        // nesting: every depth-2 component sits inside a depth-1 component
        for (_, c2) in &l2.components {
            let mid = c2.midpoint();
            assert!(
                l1.components.iter().any(|(_, c1)| c1.contains(&mid)),
                "depth-2 component escaped depth 1"
            );
        }
        // component count: each surviving Q2-cell holds two cores
        let cells_in_x1: u64 = 7 * 300 * 11 * 2; // measure of X1 times Q2 ≈ …
        assert!(l2.components.len() as u64 <= cells_in_x1 * 2);
        // beyond the budget the set restricts to a fundamental cell
        let windowed = build_level_sets(&geom, 2, LevelKind::X, 10).unwrap();
        assert!(windowed.window.is_some());
        assert!(!windowed.components.is_empty());
    }

    #[test]
    fn measure_identity_exact() {
        let trace = lambda_trace();
        for n in 1..=2u32 {
            let rep = xi_measure(trace, n).unwrap();
            assert!(rep.matches, "depth {n}: {} vs {}", rep.exact, rep.direct);
            assert!(rep.class_decomposition_ok);
            for p in &rep.partials {
                assert!(p > &rat(9, 10), "partial product {p}");
            }
        }
        let r2 = xi_measure(trace, 2).unwrap();
        let d1 = Rat::one() - &trace.stages[0].generator.delta_prime;
        let d2 = Rat::one() - &trace.stages[1].generator.delta_prime;
        assert_eq!(r2.exact, &d1 * &d2);
        // class measures: 4 chains at depth 2, each count integral
        assert_eq!(r2.class_measures.len(), 4);
    }

    #[test]
    fn cocycle_identity_and_numeric_cross_check() {
        let trace = lambda_trace();
        let x = {
            let g = &trace.stages[0].generator;
            let q = trace.stages[0]
                .big_q
                .to_uint(trace.config.budgets.materialize_bits)
                .unwrap();
            mod1(&(g.i_minus.midpoint() / Rat::from_integer(BigInt::from(q))))
        };
        let c0 = derivative_cocycle(trace, 1, &x, &BigInt::zero(), 1000).unwrap();
        assert!(c0.is_trivial());
        assert_eq!(c0.value, Rat::one());
        // a nontrivial return from the pair search, cross-checked numerically
        let g = &trace.stages[0].generator;
        let target: Vec<i64> = g
            .steep_exps
            .iter()
            .zip(g.shallow_exps.iter())
            .map(|(a, b)| a - b)
            .collect();
        let pair = find_return_pair(trace, 1, &target).unwrap();
        assert_eq!(pair.cocycle.value, rat(4, 1));
        let rel = cocycle_numeric_check(trace, 1, &pair.x, &pair.i, &pair.cocycle, 256).unwrap();
        assert!(rel < 1e-8, "numeric mismatch {rel}, cocycle {:?} at x = {}, i = {}", pair.cocycle.exps, crate::rat::rat_to_string(&pair.x), pair.i);
    }

    #[test]
    fn lambda_membership_scan_clean() {
        let trace = lambda_trace();
        let rep = ratio_membership(trace, 1, 4).unwrap();
        assert!(rep.clean(), "violations: {}", rep.violations.len());
        assert!(rep.returns_checked > 100, "only {} returns", rep.returns_checked);
        // observed derivative set at depth 1 is {1/4, 1, 4}
        let mut seen = std::collections::BTreeSet::new();
        for r in &rep.rows {
            seen.insert(crate::rat::rat_to_string(&r.cocycle.value));
        }
        for v in seen {
            assert!(
                ["1/4", "1", "4"].contains(&v.as_str()),
                "unexpected derivative {v}"
            );
        }
    }

    #[test]
    fn lambda_membership_depth2_clean() {
        let trace = lambda_trace();
        let rep = ratio_membership(trace, 2, 2).unwrap();
        assert!(rep.clean());
        assert!(rep.returns_checked > 0);
        // every value is an integer power of λ^(1/2) with even total exponent
        for r in &rep.rows {
            assert_eq!(r.cocycle.exps[0].rem_euclid(2), 0);
        }
    }

    #[test]
    fn return_pair_rejects_off_lattice_targets() {
        let trace = lambda_trace();
        let err = find_return_pair(trace, 1, &[3]);
        match err {
            Err(CjError::SearchBudgetExceeded(msg)) => {
                assert!(msg.contains("lattice"), "{msg}");
            }
            other => panic!("expected lattice diagnostic, got {other:?}"),
        }
        // trivial target: i = 0
        let triv = find_return_pair(trace, 1, &[0]).unwrap();
        assert!(triv.i.is_zero());
        assert!(triv.cocycle.is_trivial());
    }

    #[test]
    fn ii_inf_returns_trivial_and_singular() {
        let trace = ii_inf_trace();
        let rep = ratio_membership(trace, 2, 4).unwrap();
        assert!(rep.clean(), "violations: {}", rep.violations.len());
        assert!(rep.returns_checked > 0, "no steep-core returns sampled");
        for r in &rep.rows {
            assert!(r.cocycle.is_trivial());
            assert_eq!(r.cocycle.value, Rat::one());
        }
        let diag = singularity_diagnostic(trace, 2).unwrap();
        assert!(diag.core_strictly_decreasing);
        // slopes 2^4, 2^5: core ratio is exactly m(I_2⁺) ≤ 1/4
        let ratio = &diag.pairs[1].0 / &diag.pairs[0].0;
        assert!(ratio <= rat(1, 4), "core ratio {ratio}");
        assert!(diag.pairs[1].1 > rat(8, 10), "image measure {}", diag.pairs[1].1);
        for c in &diag.checks {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn iii0_gap_law_depth2() {
        let trace = iii0_trace();
        let rep = ratio_membership(trace, 2, 3).unwrap();
        assert!(rep.clean(), "violations: {}", rep.violations.len());
        let mut nontrivial = 0u32;
        for r in &rep.rows {
            let l = r.cocycle.exps[0];
            if l != 0 {
                nontrivial += 1;
                assert!(l.abs() >= 3, "gap law violated: log3 = {l}");
            }
        }
        assert!(rep.returns_checked > 0);
        let _ = nontrivial;
    }

    #[test]
    fn rotation_number_basics() {
        // rigid rotation recovers its angle
        let f = MapExpr::rotation_rat(&rat(3, 7));
        let (v, err) = rotation_number(&f, 700, 192);
        assert!((v.to_f64() - 3.0 / 7.0).abs() <= err);
        assert!((v.to_f64() - 3.0 / 7.0).abs() < 1e-12);
        // conjugation invariance within the error bar
        let m = crate::generators::make_stage_iii_lambda(&rat(4, 1), &rat(1, 100), 300)
            .unwrap()
            .map;
        let h = MapExpr::Prim(std::sync::Arc::new(m));
        let conj = MapExpr::compose(h.clone(), MapExpr::compose(f.clone(), h.inverse()));
        let (v2, err2) = rotation_number(&conj, 500, 192);
        assert!((v2.to_f64() - 3.0 / 7.0).abs() <= err2 + err);
    }

    #[test]
    fn trace_rotation_number_matches_next_angle() {
        let trace = lambda_trace();
        let f1 = trace.f(1);
        let alpha2 = trace.alpha_after(1).value_hp(256).to_f64();
        let (v, err) = rotation_number(&f1, 300, 256);
        assert!((v.to_f64() - alpha2).abs() <= err, "{} vs {alpha2}", v.to_f64());
    }
}
