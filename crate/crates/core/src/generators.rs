//! Base diffeomorphisms for each target type: two affine slopes joined by
//! C^∞ windows, with exact interval combinatorics and measure data.
//!
//! Layout of a stage generator (all data rational):
//!
//! ```text
//!        0          c1−δ   c1+δ          c2−δ   c2+δ          1
//!   ─ shallow ──── [join] ─ steep ────── [join] ─── shallow ──
//! ```
//!
//! The two affine extensions cross exactly at `c1` and `c2 = c1 + ℓ⁺`, where
//! the steep length `ℓ⁺ = (1−s⁻)/(s⁺−s⁻)` is forced by degree 1. The map
//! fixes 0 inside the shallow piece, so no transcendental normalization is
//! ever needed and every breakpoint value stays rational. `J±` are the
//! maximal affine arcs, `I± ⊂ J±` trim a further δ at each end, and the
//! measure defect `δ' = 1 − m(ĥ(I⁻ ∪ I⁺)) = 4δ(s⁺+s⁻)` exactly.

use crate::error::{CjError, Result};
use crate::maps::{BumpJoin, CircleArc, Cut, Piece, PiecewiseMap, Prim};
use crate::rat::{lcm_uint, rat, rat_to_string, sqrt_exact, Rat};
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Which construction family a generator belongs to, with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum GenTag {
    IiiLambda { lambda: Rat },
    IiiInfty { n: u32, lambda1: Rat, lambda2: Rat },
    Iii0 { n: u32 },
    IiInfty { n: u32 },
}

/// One stage's base diffeomorphism together with its interval bookkeeping.
#[derive(Clone, Debug)]
pub struct StageGenerator {
    /// ĥ: fixes 0, affine of the declared slopes on J±.
    pub map: PiecewiseMap,
    pub j_plus: CircleArc,
    pub j_minus: CircleArc,
    pub i_plus: CircleArc,
    pub i_minus: CircleArc,
    /// join half-width δ
    pub delta: Rat,
    /// measure defect δ' = 1 − m(ĥ(I⁻ ∪ I⁺))
    pub delta_prime: Rat,
    /// least common multiple of the denominators of the eight boundary points
    pub k_prime: BigUint,
    pub steep_slope: Rat,
    pub shallow_slope: Rat,
    /// exponents of the slopes over the family's multiplicative basis
    pub steep_exps: Vec<i64>,
    pub shallow_exps: Vec<i64>,
    pub tag: GenTag,
}

impl StageGenerator {
    /// The multiplicative basis symbols (name, exact value) for this family.
    pub fn basis(&self) -> Vec<(String, Rat)> {
        basis_of_tag(&self.tag)
    }

    /// Exact interval-image measure `m(ĥ(I⁻ ∪ I⁺))`, computed from the map's
    /// actual piece data (the independent route against `1 − δ'`).
    pub fn core_image_measure_direct(&self) -> Option<Rat> {
        let (alo, ahi) = (&self.i_plus.lo, &self.i_plus.hi);
        let (blo, bhi) = (&self.i_minus.lo, &self.i_minus.hi);
        let (pa, pb) = self.map.image_of_arc(&crate::rat::mod1(alo), &crate::rat::mod1(ahi))?;
        let (qa, qb) = self.map.image_of_arc(&crate::rat::mod1(blo), &crate::rat::mod1(bhi))?;
        Some((pb - pa) + (qb - qa))
    }

    /// Consistency checks: exact fixed point, degree 1, exact affinity on
    /// the core arcs, measure identity, and the boundary-denominator lcm.
    pub fn validate(&self) -> Result<()> {
        self.map.validate()?;
        if self.map.eval_rat(&Rat::zero()) != Some(Rat::zero()) {
            return Err(CjError::GeometryInfeasible("generator must fix 0".into()));
        }
        match self.map.total_increase() {
            Some(t) if t.is_one() => {}
            t => {
                return Err(CjError::GeometryInfeasible(format!(
                    "lift increase over one period is {:?}, not 1",
                    t.map(|r| rat_to_string(&r))
                )))
            }
        }
        let direct = self.core_image_measure_direct().ok_or_else(|| {
            CjError::GeometryInfeasible("core interval images must evaluate exactly".into())
        })?;
        if &direct + &self.delta_prime != Rat::one() {
            return Err(CjError::GeometryInfeasible(format!(
                "measure identity violated: m(ĥ(I⁻∪I⁺)) = {}, δ' = {}",
                rat_to_string(&direct),
                rat_to_string(&self.delta_prime)
            )));
        }
        for b in self.boundary_points() {
            let kb = Rat::from_integer(BigInt::from(self.k_prime.clone())) * &b;
            if !kb.denom().is_one() {
                return Err(CjError::GeometryInfeasible(format!(
                    "K' = {} does not clear the denominator of {}",
                    self.k_prime,
                    rat_to_string(&b)
                )));
            }
        }
        Ok(())
    }

    /// The eight boundary points ∂±J±, ∂±I± as circle points.
    pub fn boundary_points(&self) -> Vec<Rat> {
        vec![
            crate::rat::mod1(&self.j_plus.lo),
            crate::rat::mod1(&self.j_plus.hi),
            crate::rat::mod1(&self.j_minus.lo),
            crate::rat::mod1(&self.j_minus.hi),
            crate::rat::mod1(&self.i_plus.lo),
            crate::rat::mod1(&self.i_plus.hi),
            crate::rat::mod1(&self.i_minus.lo),
            crate::rat::mod1(&self.i_minus.hi),
        ]
    }
}

pub fn basis_of_tag(tag: &GenTag) -> Vec<(String, Rat)> {
    match tag {
        GenTag::IiiLambda { lambda } => {
            let root = sqrt_exact(lambda).expect("validated at construction");
            vec![("sqrt_lambda".into(), root)]
        }
        GenTag::IiiInfty { lambda1, lambda2, .. } => vec![
            ("lambda1".into(), lambda1.clone()),
            ("lambda2".into(), lambda2.clone()),
        ],
        GenTag::Iii0 { .. } => vec![("three".into(), rat(3, 1))],
        GenTag::IiInfty { .. } => vec![("two".into(), rat(2, 1))],
    }
}

/// Core two-slope builder shared by all families.
fn two_slope_generator(
    steep: Rat,
    shallow: Rat,
    delta: &Rat,
    breakpoint_denominator: u64,
    tag: GenTag,
    steep_exps: Vec<i64>,
    shallow_exps: Vec<i64>,
) -> Result<StageGenerator> {
    if steep <= Rat::one() || shallow >= Rat::one() || !shallow.is_positive() {
        return Err(CjError::Config(format!(
            "slopes must straddle 1: got {} and {}",
            rat_to_string(&steep),
            rat_to_string(&shallow)
        )));
    }
    if !delta.is_positive() {
        return Err(CjError::Config("join half-width must be positive".into()));
    }
    let one = Rat::one();
    let two = rat(2, 1);
    let ell_plus = (&one - &shallow) / (&steep - &shallow);
    // center the steep arc: crossings at c1, c2 = c1 + ℓ⁺, snapped to the grid
    let grid = Rat::new(BigInt::one(), BigInt::from(breakpoint_denominator));
    let ideal = (&one - &ell_plus) / &two;
    let c1 = (&ideal / &grid).floor() * &grid;
    let c1 = if c1.is_positive() { c1 } else { ideal.clone() };
    let c2 = &c1 + &ell_plus;
    // feasibility: windows clear of 0 and of each other, cores nonempty
    let four_delta = rat(4, 1) * delta;
    if &c1 - &two * delta <= Rat::zero() {
        return Err(CjError::GeometryInfeasible(
            "join window would reach the fixed point at 0".into(),
        ));
    }
    if &c2 + &two * delta >= Rat::one() {
        return Err(CjError::GeometryInfeasible(
            "join window would wrap past 1".into(),
        ));
    }
    if ell_plus <= four_delta {
        return Err(CjError::GeometryInfeasible(
            "steep core would be empty (ℓ⁺ ≤ 4δ)".into(),
        ));
    }
    if &one - &ell_plus <= four_delta {
        return Err(CjError::GeometryInfeasible(
            "shallow core would be empty (ℓ⁻ ≤ 4δ)".into(),
        ));
    }
    // pieces: join around c1, steep, join around c2, shallow through (1,1)
    let cuts = vec![
        Cut::Exact(&c1 - delta),
        Cut::Exact(&c1 + delta),
        Cut::Exact(&c2 - delta),
        Cut::Exact(&c2 + delta),
    ];
    let steep_offset = &c1 * (&shallow - &steep);
    let pieces = vec![
        Piece {
            prims: vec![Prim::Bump(BumpJoin {
                lo: &c1 - delta,
                hi: &c1 + delta,
                slope_in: shallow.clone(),
                slope_out: steep.clone(),
                val_lo: &shallow * (&c1 - delta),
            })],
        },
        Piece::affine(steep.clone(), steep_offset.clone()),
        Piece {
            prims: vec![Prim::Bump(BumpJoin {
                lo: &c2 - delta,
                hi: &c2 + delta,
                slope_in: steep.clone(),
                slope_out: shallow.clone(),
                val_lo: &steep * (&c2 - delta) + &steep_offset,
            })],
        },
        Piece::affine(shallow.clone(), &one - &shallow),
    ];
    let map = PiecewiseMap { cuts, pieces };
    map.validate()?;
    let j_plus = CircleArc::new(&c1 + delta, &c2 - delta);
    let j_minus = CircleArc::new(&c2 + delta, &one + &c1 - delta);
    let i_plus = CircleArc::new(&c1 + &two * delta, &c2 - &two * delta);
    let i_minus = CircleArc::new(&c2 + &two * delta, &one + &c1 - &two * delta);
    let delta_prime = &four_delta * (&steep + &shallow);
    let mut k_prime = BigUint::one();
    let gen = StageGenerator {
        map,
        j_plus,
        j_minus,
        i_plus,
        i_minus,
        delta: delta.clone(),
        delta_prime,
        k_prime: BigUint::one(),
        steep_slope: steep,
        shallow_slope: shallow,
        steep_exps,
        shallow_exps,
        tag,
    };
    for b in gen.boundary_points() {
        k_prime = lcm_uint(&k_prime, b.denom().magnitude());
    }
    let gen = StageGenerator { k_prime, ..gen };
    gen.validate()?;
    Ok(gen)
}

/// Generator with affine slopes `√λ` and `1/√λ`. The ratio of the two
/// slopes is exactly λ, which is what the ratio-set certificates consume.
///
/// λ must be the square of a rational; for other targets pass a rational
/// approximation of √λ to [`make_stage_iii_lambda_with_root`] (the realized
/// type parameter is then the exact square of that root).
pub fn make_stage_iii_lambda(
    lambda: &Rat,
    delta: &Rat,
    breakpoint_denominator: u64,
) -> Result<StageGenerator> {
    if *lambda <= Rat::one() {
        return Err(CjError::Config("lambda must exceed 1".into()));
    }
    let root = sqrt_exact(lambda).ok_or_else(|| {
        CjError::Config(
            "lambda has no rational square root; use an explicit root approximation".into(),
        )
    })?;
    make_stage_iii_lambda_with_root(&root, delta, breakpoint_denominator)
}

pub fn make_stage_iii_lambda_with_root(
    root: &Rat,
    delta: &Rat,
    breakpoint_denominator: u64,
) -> Result<StageGenerator> {
    if *root <= Rat::one() {
        return Err(CjError::Config("slope root must exceed 1".into()));
    }
    let lambda = root * root;
    two_slope_generator(
        root.clone(),
        root.recip(),
        delta,
        breakpoint_denominator,
        GenTag::IiiLambda { lambda },
        vec![1],
        vec![-1],
    )
}

/// Alternating-slope family: odd stages use `λ1^{±1}`, even stages `λ2^{±1}`.
pub fn make_stage_iii_infty(
    n: u32,
    lambda1: &Rat,
    lambda2: &Rat,
    delta: &Rat,
    breakpoint_denominator: u64,
) -> Result<StageGenerator> {
    if !(Rat::one() < *lambda1 && lambda1 < lambda2) {
        return Err(CjError::Config("need 1 < lambda1 < lambda2".into()));
    }
    let (slope, exps) = if n % 2 == 1 {
        (lambda1.clone(), (vec![1, 0], vec![-1, 0]))
    } else {
        (lambda2.clone(), (vec![0, 1], vec![0, -1]))
    };
    two_slope_generator(
        slope.clone(),
        slope.recip(),
        delta,
        breakpoint_denominator,
        GenTag::IiiInfty { n, lambda1: lambda1.clone(), lambda2: lambda2.clone() },
        exps.0,
        exps.1,
    )
}

/// Widening-gap family: slopes `3^{3^n}` and `1/3`.
pub fn make_stage_iii_0(n: u32, delta: &Rat, breakpoint_denominator: u64) -> Result<StageGenerator> {
    if n == 0 {
        return Err(CjError::Config("stage index must be positive".into()));
    }
    if n > 10 {
        return Err(CjError::BudgetExceeded(format!(
            "slope 3^(3^{n}) exceeds the big-integer budget"
        )));
    }
    let e = 3u64.pow(n);
    let steep = Rat::from_integer(BigInt::from(3u32).pow(e.to_u32().unwrap()));
    two_slope_generator(
        steep,
        rat(1, 3),
        delta,
        breakpoint_denominator,
        GenTag::Iii0 { n },
        vec![e as i64],
        vec![-1],
    )
}

/// Balanced doubling family: slopes `2^{±n}`. The steep-side core interval
/// is the input to the singularity diagnostic.
pub fn make_stage_ii_infty(n: u32, delta: &Rat, breakpoint_denominator: u64) -> Result<StageGenerator> {
    if n == 0 {
        return Err(CjError::Config("stage index must be positive".into()));
    }
    if n > 64 {
        return Err(CjError::BudgetExceeded("slope 2^n exceeds the supported range".into()));
    }
    let steep = Rat::from_integer(BigInt::one() << n as usize);
    two_slope_generator(
        steep.clone(),
        steep.recip(),
        delta,
        breakpoint_denominator,
        GenTag::IiInfty { n },
        vec![n as i64],
        vec![-(n as i64)],
    )
}

/// Slope pair a family assigns to a given stage index (before any
/// configured index offset).
pub fn family_slopes(family: &GenTag, n: u32) -> (Rat, Rat) {
    match family {
        GenTag::IiiLambda { lambda } => {
            let root = sqrt_exact(lambda).expect("validated earlier");
            (root.clone(), root.recip())
        }
        GenTag::IiiInfty { lambda1, lambda2, .. } => {
            let s = if n % 2 == 1 { lambda1.clone() } else { lambda2.clone() };
            (s.clone(), s.recip())
        }
        GenTag::Iii0 { .. } => {
            let e = 3u32.pow(n);
            (Rat::from_integer(BigInt::from(3u32).pow(e)), rat(1, 3))
        }
        GenTag::IiInfty { .. } => {
            let s = Rat::from_integer(BigInt::one() << n as usize);
            (s.clone(), s.recip())
        }
    }
}

/// Chooses a δ-schedule whose exact partial products `∏(1−δ'_j)` stay above
/// the target with a geometric reserve for stages beyond the plan.
///
/// Budgets `t_n = (1−target)·2^{-n-1}` sum to `(1−target)/2`, so the product
/// over *all* stages, planned or not, exceeds the target by the sum bound.
pub fn schedule_deltas(
    family: &GenTag,
    max_stages: u32,
    target_product: &Rat,
    stage_index: impl Fn(u32) -> u32,
) -> Result<Vec<(Rat, u64)>> {
    if !(target_product < &Rat::one()) {
        return Err(CjError::ScheduleInfeasible("target product must be below 1".into()));
    }
    let mut out = Vec::new();
    let mut last_m: u32 = 0;
    for stage in 1..=max_stages {
        let n = stage_index(stage);
        let (steep, shallow) = family_slopes(family, n);
        let slope_sum = &steep + &shallow;
        let budget = (Rat::one() - target_product) * crate::rat::pow2(-(stage as i64) - 1);
        // δ = largest power of ten with 4δ(s⁺+s⁻) ≤ budget, strictly shrinking
        let mut m = last_m + 1;
        loop {
            if m > 400 {
                return Err(CjError::ScheduleInfeasible(format!(
                    "stage {stage} cannot meet its defect budget at any grid scale"
                )));
            }
            let delta = Rat::new(BigInt::one(), BigInt::from(10u32).pow(m));
            let defect = rat(4, 1) * &delta * &slope_sum;
            if defect <= budget {
                out.push((delta, breakpoint_denominator_for(&steep, &shallow, m)));
                last_m = m;
                break;
            }
            m += 1;
        }
    }
    Ok(out)
}

fn breakpoint_denominator_for(steep: &Rat, shallow: &Rat, m: u32) -> u64 {
    let ell = (Rat::one() - shallow) / (steep - shallow);
    let c1_den = (Rat::one() - ell) / rat(2, 1);
    let den = lcm_uint(c1_den.denom().magnitude(), &BigUint::from(10u32).pow(m));
    den.to_u64().unwrap_or(u64::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::mod1;

    #[test]
    fn lambda_four_geometry() {
        // slopes 2 and 1/2 cross at a = 1/3; with the steep arc centered the
        // crossings sit at 1/3 and 2/3
        let g = make_stage_iii_lambda(&rat(4, 1), &rat(1, 100), 300).unwrap();
        assert_eq!(g.steep_slope, rat(2, 1));
        assert_eq!(g.shallow_slope, rat(1, 2));
        assert_eq!(g.j_plus.lo, rat(1, 3) + rat(1, 100));
        assert_eq!(g.j_plus.hi, rat(2, 3) - rat(1, 100));
        // δ' = 1 − [2·m(I⁺) + (1/2)·m(I⁻)] = 1/10 at δ = 1/100
        assert_eq!(g.delta_prime, rat(1, 10));
        assert_eq!(g.k_prime, BigUint::from(300u32));
        // exact affinity at rational points deep in the cores
        for x in [g.i_plus.midpoint(), mod1(&(&g.i_plus.lo + rat(1, 997)))] {
            assert_eq!(g.map.derivative_exact(&x), Some(rat(2, 1)));
        }
        assert_eq!(g.map.derivative_exact(&g.i_minus.midpoint()), Some(rat(1, 2)));
        // interior affine evaluation is exact: 2x + offset on the steep piece
        let x = g.i_plus.midpoint();
        let v = g.map.eval_rat(&x).unwrap();
        assert_eq!(v, mod1(&(rat(2, 1) * &x + rat(1, 3) * (rat(1, 2) - rat(2, 1)))));
    }

    #[test]
    fn delta_prime_shrinks_with_delta() {
        let mut last = rat(1, 1);
        for m in [2u32, 3, 4] {
            let d = Rat::new(BigInt::one(), BigInt::from(10u32).pow(m));
            let g = make_stage_iii_lambda(&rat(4, 1), &d, 300 * 10u64.pow(m)).unwrap();
            assert!(g.delta_prime < last);
            last = g.delta_prime.clone();
            // the identity m(ĥ(I⁻∪I⁺)) + δ' = 1 is checked inside validate();
            // re-assert through the direct route
            assert_eq!(g.core_image_measure_direct().unwrap() + &g.delta_prime, rat(1, 1));
        }
    }

    #[test]
    fn overlapping_windows_rejected() {
        // δ = a/2 makes the windows collide with the fixed point / cores
        let err = make_stage_iii_lambda(&rat(4, 1), &rat(1, 6), 300);
        assert!(matches!(err, Err(CjError::GeometryInfeasible(_))));
    }

    #[test]
    fn iii_infty_parity() {
        let d = rat(1, 1000);
        let g1 = make_stage_iii_infty(1, &rat(2, 1), &rat(3, 1), &d, 6000).unwrap();
        assert_eq!(g1.steep_slope, rat(2, 1));
        assert_eq!(g1.shallow_slope, rat(1, 2));
        let g2 = make_stage_iii_infty(2, &rat(2, 1), &rat(3, 1), &d, 6000).unwrap();
        assert_eq!(g2.steep_slope, rat(3, 1));
        assert_eq!(g2.shallow_slope, rat(1, 3));
        let g3 = make_stage_iii_infty(3, &rat(2, 1), &rat(3, 1), &d, 6000).unwrap();
        assert_eq!(g3.steep_slope, g1.steep_slope);
        assert_eq!(g3.j_plus, g1.j_plus);
    }

    #[test]
    fn iii_zero_steep_lengths() {
        // n = 1: slopes (27, 1/3), steep length 1/40, image measure 27/40
        let g = make_stage_iii_0(1, &rat(1, 1000), 120_000).unwrap();
        assert_eq!(g.steep_slope, rat(27, 1));
        assert_eq!(&g.j_plus.len() + rat(2, 1000), rat(1, 40));
        let img = rat(27, 1) * (rat(1, 40) - rat(4, 1000));
        assert_eq!(
            g.map.image_of_arc(&mod1(&g.i_plus.lo), &mod1(&g.i_plus.hi)).map(|(a, b)| b - a),
            Some(img)
        );
        // n = 2: slopes (3^9, 1/3); steep length 2/(3^10 − 1) ≈ 3.4e-5
        let d2 = rat(1, 1_000_000);
        let bp2 = breakpoint_denominator_for(&Rat::from_integer(BigInt::from(19683u32)), &rat(1, 3), 6);
        let g2 = make_stage_iii_0(2, &d2, bp2).unwrap();
        assert_eq!(g2.steep_slope, Rat::from_integer(BigInt::from(19683u32)));
        assert_eq!(&g2.j_plus.len() + rat(2, 1_000_000), rat(2, 59048));
        // steep-image measures decrease monotonically toward 2/3
        let m1 = rat(27, 1) * (rat(1, 40));
        let m2 = rat(19683, 1) * rat(2, 59048);
        assert!(m2 < m1 && rat(2, 3) < m2);
    }

    #[test]
    fn ii_infty_lengths() {
        // n = 3: slopes (8, 1/8): steep length (1−1/8)/(8−1/8) = 1/9,
        // image measure 8/9
        let g = make_stage_ii_infty(3, &rat(1, 1000), 18_000).unwrap();
        assert_eq!(g.steep_slope, rat(8, 1));
        assert_eq!(&g.j_plus.len() + rat(2, 1000), rat(1, 9));
        // n = 1 matches the λ = 4 two-slope geometry
        let g1 = make_stage_ii_infty(1, &rat(1, 100), 300).unwrap();
        let gl = make_stage_iii_lambda(&rat(4, 1), &rat(1, 100), 300).unwrap();
        assert_eq!(g1.j_plus, gl.j_plus);
        assert_eq!(g1.steep_slope, gl.steep_slope);
        // core shrinks while image measure grows with n (fixed δ)
        let d = rat(1, 100_000);
        let mut prev_core = rat(1, 1);
        let mut prev_img = rat(0, 1);
        for n in 1..=4u32 {
            let g = make_stage_ii_infty(n, &d, 100_000 * 3 * 5 * 17).unwrap();
            let core = g.i_plus.len();
            let img = &g.steep_slope * &core;
            assert!(core < prev_core);
            assert!(img > prev_img);
            prev_core = core;
            prev_img = img;
        }
    }

    #[test]
    fn schedule_meets_product_target() {
        let fam = GenTag::IiiLambda { lambda: rat(4, 1) };
        let target = rat(9, 10);
        let sched = schedule_deltas(&fam, 3, &target, |s| s).unwrap();
        assert_eq!(sched.len(), 3);
        let mut product = rat(1, 1);
        let mut defect_sum = rat(0, 1);
        let mut last_delta = rat(1, 1);
        for (stage, (delta, bp)) in sched.iter().enumerate() {
            let g = make_stage_iii_lambda(&rat(4, 1), delta, *bp).unwrap();
            product *= rat(1, 1) - &g.delta_prime;
            defect_sum += &g.delta_prime;
            assert!(*delta < last_delta, "δ must strictly decrease");
            last_delta = delta.clone();
            let _ = stage;
        }
        assert!(defect_sum < rat(1, 10), "sum bound implies the product bound");
        assert!(product > target);
        // vacuous target accepts anything
        assert!(schedule_deltas(&fam, 2, &rat(0, 1), |s| s).is_ok());
    }
}
