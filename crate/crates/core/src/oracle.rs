//! Rational approximation oracles and the search for witnesses of the
//! Liouville property.
//!
//! An oracle produces rational approximations of an irrational target at any
//! requested accuracy, plus a lazy stream of *witness candidates*: best
//! approximations with certified two-sided gap enclosures. All certification
//! is exact scaled-rational arithmetic; nothing here trusts a float.
//!
//! Two Liouville families are built in. The factorial series
//! `Σ base^{-k!}` has closed-form tail bounds but forces witness
//! denominators of the form `base^{k!}`, which quickly leave the realm of
//! materializable integers (the structural [`Alpha`] form covers that). The
//! planted-quotient family drives its continued-fraction quotients up a
//! doubly-geometric ramp, so every convergent is a maximal-quality witness
//! with a small, fully materializable denominator — the workhorse for runs
//! that need explicit orbit arithmetic.

use crate::error::{CjError, Result};
use crate::mag::{factorial, Alpha, HugeInt, Mag};
use crate::rat::{digits, Rat};
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::sync::Mutex;

/// A best-approximation candidate with a certified gap enclosure:
/// `gap_lo ≤ |α − alpha| ≤ gap_hi`, both exact.
#[derive(Clone, Debug)]
pub struct WitnessCandidate {
    pub alpha: Alpha,
    pub q: HugeInt,
    pub gap_lo: Mag,
    pub gap_hi: Mag,
}

/// Serializable oracle description.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleSpec {
    FactorialSeries { base: u32 },
    PlantedQuotients { base: u32, ramp: u32 },
    Rational { value: String },
    GoldenMean,
}

pub trait LiouvilleOracle: Send + Sync {
    /// A rational within `2^-bits` of the target.
    fn approx(&self, bits: u64) -> Rat;

    fn is_liouville(&self) -> bool;

    /// The target itself, when it is exactly rational.
    fn exact(&self) -> Option<Rat> {
        None
    }

    /// Lazy stream of witness candidates with strictly increasing `q`.
    fn witnesses(&self) -> Box<dyn Iterator<Item = WitnessCandidate> + '_>;

    fn spec(&self) -> OracleSpec;

    /// Certified enclosure of `|α − a|` for an arbitrary exact rational `a`,
    /// refined until it is strictly one side of `threshold` or the bit
    /// budget runs out. Returns (gap_lo, gap_hi).
    fn gap_enclosure(&self, a: &Alpha, threshold: &Mag, max_bits: u64) -> Result<(Mag, Mag)> {
        // structural fast path: a candidate from our own stream
        for w in self.witnesses() {
            if w.alpha == *a {
                return Ok((w.gap_lo, w.gap_hi));
            }
            if threshold.base != 2 {
                // candidates are ordered; once well past the scale, stop
            }
            if w.gap_hi.lt(threshold) && w.gap_hi.lt(&threshold.mul(&Mag::from_rat(&crate::rat::rat(1, 1_000_000), threshold.base))) {
                break;
            }
        }
        let ar = a.to_plain_rat().ok_or_else(|| {
            CjError::PrecisionExhausted("gap enclosure needs a materializable target".into())
        })?;
        let base = threshold.base;
        let mut bits = 128u64;
        loop {
            let approx = self.approx(bits);
            let err = Rat::new(BigInt::one(), BigInt::one() << bits as usize);
            let diff = (&approx - &ar).abs();
            let lo = (&diff - &err).max(Rat::zero());
            let hi = &diff + &err;
            let lo_m = Mag::from_rat(&lo, base);
            let hi_m = Mag::from_rat(&hi, base);
            if hi_m.lt(threshold) || !lo_m.lt(threshold) {
                return Ok((lo_m, hi_m));
            }
            bits *= 2;
            if bits > max_bits {
                return Err(CjError::PrecisionExhausted(format!(
                    "cannot separate |α − {}| from the threshold within {} bits",
                    a.describe(),
                    max_bits
                )));
            }
        }
    }
}

// ───────────────────────────────────────────────────────────────────────────
// Factorial series Σ base^{-k!}
// ───────────────────────────────────────────────────────────────────────────

pub struct FactorialSeriesOracle {
    pub base: u32,
}

impl FactorialSeriesOracle {
    pub fn new(base: u32) -> Self {
        assert!(base >= 2);
        FactorialSeriesOracle { base }
    }

    /// Tail enclosure: `B^{-(k+1)!} < Σ_{j>k} B^{-j!} < 2·B^{-(k+1)!}`.
    /// The upper constant 2 is generous: the next term ratio is below
    /// `B^{-(k+1)!·(k+1)}`.
    fn tail_enclosure(&self, k: u32) -> (Mag, Mag) {
        let e = BigInt::from(factorial(k + 1));
        let lo = Mag::new(Rat::one(), self.base, -e.clone());
        let hi = Mag::new(Rat::from_integer(BigInt::from(2)), self.base, -e);
        (lo, hi)
    }
}

impl LiouvilleOracle for FactorialSeriesOracle {
    fn approx(&self, bits: u64) -> Rat {
        let lb = (self.base as f64).log2();
        let mut k = 1u32;
        // smallest k with (k+1)!·log2(B) > bits + 1
        while factorial(k + 1).to_f64().unwrap_or(f64::MAX) * lb <= bits as f64 + 1.0 {
            k += 1;
        }
        Alpha::FactorialTail { base: self.base, k }
            .to_plain_rat()
            .expect("approximation request beyond materializable precision")
    }

    fn is_liouville(&self) -> bool {
        true
    }

    fn witnesses(&self) -> Box<dyn Iterator<Item = WitnessCandidate> + '_> {
        let base = self.base;
        Box::new((1u32..).map(move |k| {
            let (gap_lo, gap_hi) = self.tail_enclosure(k);
            WitnessCandidate {
                // numerator Σ B^{k!−j!} ≡ 1 mod B, so the fraction is reduced
                alpha: Alpha::FactorialTail { base, k },
                q: HugeInt::power(base, factorial(k)),
                gap_lo,
                gap_hi,
            }
        }))
    }

    fn spec(&self) -> OracleSpec {
        OracleSpec::FactorialSeries { base: self.base }
    }

    fn gap_enclosure(&self, a: &Alpha, _threshold: &Mag, _max_bits: u64) -> Result<(Mag, Mag)> {
        if let Alpha::FactorialTail { base, k } = a {
            if *base == self.base {
                return Ok(self.tail_enclosure(*k));
            }
        }
        // differences against other rationals: |α − a| via a deep truncation
        let ar = a.to_plain_rat().ok_or_else(|| {
            CjError::PrecisionExhausted("structural angle from a different oracle".into())
        })?;
        // pick k with B^{-(k+1)!} far below |T_k − a| unless they coincide
        for k in 2..=8u32 {
            let t = Alpha::FactorialTail { base: self.base, k };
            let tr = match t.to_plain_rat() {
                Some(v) => v,
                None => break,
            };
            let d = (&tr - &ar).abs();
            let (_tail_lo, tail_hi) = self.tail_enclosure(k);
            let d_m = Mag::from_rat(&d, self.base);
            if tail_hi.mul(&Mag::from_u64(4, self.base)).lt(&d_m) {
                // |α − a| ∈ [d − tail_hi, d + tail_hi]
                let lo = d_m.try_add_exact(&tail_hi.neg()).unwrap_or_else(|| d_m.div(&Mag::from_u64(2, self.base)));
                let hi = d_m.add_upper(&tail_hi);
                return Ok((lo, hi));
            }
            if d.is_zero() {
                return Ok(self.tail_enclosure(k));
            }
        }
        Err(CjError::PrecisionExhausted(
            "target too close to a deep truncation to separate".into(),
        ))
    }
}

// ───────────────────────────────────────────────────────────────────────────
// Planted continued-fraction quotients
// ───────────────────────────────────────────────────────────────────────────

struct PlantedState {
    /// (p, q) convergents, starting from p_0/q_0 = 0/1.
    convergents: Vec<(BigUint, BigUint)>,
    /// planted quotient exponents: a_{m+1} = base^{exps[m]}
    exps: Vec<u64>,
}

/// Continued fraction `[0; a_1, a_2, …]` with `a_1 = 2` and
/// `a_{m+1} = base^{ramp·2^m·digits(q_m)}`. Quotient growth this steep makes
/// every convergent a witness of arbitrarily high Liouville quality while
/// denominators stay materializable for the first several stages.
pub struct PlantedQuotientOracle {
    pub base: u32,
    pub ramp: u32,
    state: Mutex<PlantedState>,
}

impl PlantedQuotientOracle {
    pub fn new(base: u32, ramp: u32) -> Self {
        assert!(base >= 2 && ramp >= 1);
        PlantedQuotientOracle {
            base,
            ramp,
            state: Mutex::new(PlantedState {
                convergents: vec![(BigUint::zero(), BigUint::one())],
                exps: Vec::new(),
            }),
        }
    }

    /// Ensures convergents up to index m exist; returns (p_m, q_m).
    fn convergent(&self, m: usize) -> (BigUint, BigUint) {
        let mut st = self.state.lock().unwrap();
        while st.convergents.len() <= m {
            let n = st.convergents.len();
            let (a, prev2, prev1) = if n == 1 {
                (BigUint::from(2u32), (BigUint::one(), BigUint::zero()), st.convergents[0].clone())
            } else {
                let e = self.ramp as u64 * (1u64 << (n - 1)) * digits(&st.convergents[n - 1].1);
                st.exps.push(e);
                assert!(
                    e <= 64_000_000,
                    "planted quotient exponent grew beyond the big-integer budget"
                );
                (
                    BigUint::from(self.base).pow(e.to_u32().expect("exponent fits u32")),
                    st.convergents[n - 2].clone(),
                    st.convergents[n - 1].clone(),
                )
            };
            if n == 1 {
                st.exps.push(0); // a_1 = 2 recorded as exponent 0 sentinel
            }
            let p = &a * &prev1.0 + &prev2.0;
            let q = &a * &prev1.1 + &prev2.1;
            st.convergents.push((p, q));
        }
        st.convergents[m].clone()
    }

    fn next_exp_for(&self, m: usize) -> u64 {
        let st = self.state.lock().unwrap();
        self.ramp as u64 * (1u64 << m) * digits(&st.convergents[m].1)
    }
}

impl LiouvilleOracle for PlantedQuotientOracle {
    fn approx(&self, bits: u64) -> Rat {
        let mut m = 1usize;
        loop {
            let (p, q) = self.convergent(m);
            // |α − p_m/q_m| < 1/q_m², and the planted next quotient makes it
            // far smaller; q_m² > 2^bits suffices
            if 2 * q.bits() >= bits + 2 {
                return Rat::new(BigInt::from(p), BigInt::from(q));
            }
            // deeper convergents shrink the gap by at least base^{ramp·2^m}
            let gap_log2 = self.next_exp_for(m) as f64 * (self.base as f64).log2();
            if gap_log2 > bits as f64 + 2.0 {
                return Rat::new(BigInt::from(p), BigInt::from(q));
            }
            m += 1;
        }
    }

    fn is_liouville(&self) -> bool {
        true
    }

    fn witnesses(&self) -> Box<dyn Iterator<Item = WitnessCandidate> + '_> {
        let base = self.base;
        Box::new((1usize..).map(move |m| {
            let (p, q) = self.convergent(m);
            let e = self.next_exp_for(m);
            // a_{m+1} = base^e (for m = 1 the next quotient is planted too);
            // 1/(q(q+q')) ≥ B^{-e}/(3q²) and 1/(qq') < B^{-e}/q²
            let q2 = Rat::new(BigInt::one(), BigInt::from(&q * &q));
            let gap_hi = Mag::new(q2.clone(), base, -BigInt::from(e));
            let gap_lo = Mag::new(q2 / Rat::from_integer(BigInt::from(3)), base, -BigInt::from(e));
            WitnessCandidate {
                alpha: Alpha::Plain(Rat::new(BigInt::from(p), BigInt::from(q.clone()))),
                q: HugeInt::from_uint(q, base),
                gap_lo,
                gap_hi,
            }
        }))
    }

    fn spec(&self) -> OracleSpec {
        OracleSpec::PlantedQuotients { base: self.base, ramp: self.ramp }
    }
}

// ───────────────────────────────────────────────────────────────────────────
// Auxiliary oracles
// ───────────────────────────────────────────────────────────────────────────

/// Wraps an exact rational (guard case: not irrational, not Liouville).
pub struct RationalOracle(pub Rat);

impl LiouvilleOracle for RationalOracle {
    fn approx(&self, _bits: u64) -> Rat {
        self.0.clone()
    }

    fn is_liouville(&self) -> bool {
        false
    }

    fn exact(&self) -> Option<Rat> {
        Some(self.0.clone())
    }

    fn witnesses(&self) -> Box<dyn Iterator<Item = WitnessCandidate> + '_> {
        Box::new(std::iter::empty())
    }

    fn spec(&self) -> OracleSpec {
        OracleSpec::Rational { value: crate::rat::rat_to_string(&self.0) }
    }
}

/// (√5 − 1)/2, the worst-approximable irrational: a useful negative control
/// and the source of the all-ones continued fraction.
pub struct GoldenMeanOracle;

impl GoldenMeanOracle {
    fn fib_pair(&self, min_bits: u64) -> (BigUint, BigUint) {
        // consecutive Fibonacci numbers (F_m, F_{m+1}) with F_m² beyond the bits
        let mut a = BigUint::one();
        let mut b = BigUint::one();
        while 2 * a.bits() < min_bits + 4 {
            let c = &a + &b;
            a = b;
            b = c;
        }
        (a, b)
    }
}

impl LiouvilleOracle for GoldenMeanOracle {
    fn approx(&self, bits: u64) -> Rat {
        let (a, b) = self.fib_pair(bits);
        Rat::new(BigInt::from(a), BigInt::from(b))
    }

    fn is_liouville(&self) -> bool {
        false
    }

    fn witnesses(&self) -> Box<dyn Iterator<Item = WitnessCandidate> + '_> {
        // convergents F_m/F_{m+1} with the standard two-sided enclosure
        let mut a = BigUint::one();
        let mut b = BigUint::one();
        Box::new(std::iter::from_fn(move || {
            let p = a.clone();
            let q = b.clone();
            let c = &a + &b;
            a = b.clone();
            b = c;
            let qn = &b; // q_{m+1}
            let lo = Rat::new(BigInt::one(), BigInt::from(&q * (qn + &q)));
            let hi = Rat::new(BigInt::one(), BigInt::from(&q * qn));
            Some(WitnessCandidate {
                alpha: Alpha::Plain(Rat::new(BigInt::from(p), BigInt::from(q.clone()))),
                q: HugeInt::from_uint(q, 10),
                gap_lo: Mag::from_rat(&lo, 10),
                gap_hi: Mag::from_rat(&hi, 10),
            })
        }))
    }

    fn spec(&self) -> OracleSpec {
        OracleSpec::GoldenMean
    }
}

pub fn build_oracle(spec: &OracleSpec) -> Result<std::sync::Arc<dyn LiouvilleOracle>> {
    Ok(match spec {
        OracleSpec::FactorialSeries { base } => {
            if *base < 2 {
                return Err(CjError::Config("factorial series base must be ≥ 2".into()));
            }
            std::sync::Arc::new(FactorialSeriesOracle::new(*base))
        }
        OracleSpec::PlantedQuotients { base, ramp } => {
            if *base < 2 || *ramp < 1 {
                return Err(CjError::Config("planted quotients need base ≥ 2, ramp ≥ 1".into()));
            }
            std::sync::Arc::new(PlantedQuotientOracle::new(*base, *ramp))
        }
        OracleSpec::Rational { value } => {
            let r = crate::rat::rat_from_str(value)
                .ok_or_else(|| CjError::Config(format!("bad rational '{value}'")))?;
            std::sync::Arc::new(RationalOracle(r))
        }
        OracleSpec::GoldenMean => std::sync::Arc::new(GoldenMeanOracle),
    })
}

// ───────────────────────────────────────────────────────────────────────────
// Continued fractions
// ───────────────────────────────────────────────────────────────────────────

fn cf_expand(x: &Rat, max_terms: usize) -> Vec<BigUint> {
    let mut out = Vec::new();
    let mut cur = x.clone();
    for _ in 0..max_terms {
        let fl = crate::rat::floor_int(&cur);
        out.push(fl.magnitude().clone());
        let frac = &cur - Rat::from_integer(fl);
        if frac.is_zero() {
            break;
        }
        cur = frac.recip();
    }
    out
}

/// First `depth` continued-fraction convergents of the oracle target (the
/// leading integer part is dropped — targets live in (0,1)).
///
/// Partial quotients are validated against a two-sided enclosure of the
/// target and the precision refined until `depth` of them are unambiguous.
/// A rational target yields its terminating expansion.
pub fn convergents(oracle: &dyn LiouvilleOracle, depth: usize, max_bits: u64) -> Result<Vec<Rat>> {
    assert!(depth >= 1);
    let quotients: Vec<BigUint> = if let Some(x) = oracle.exact() {
        let q = cf_expand(&x, depth + 1);
        q
    } else {
        let mut bits = 256u64;
        loop {
            let mid = oracle.approx(bits);
            let err = Rat::new(BigInt::one(), BigInt::one() << bits as usize);
            let lo_cf = cf_expand(&(&mid - &err), depth + 2);
            let hi_cf = cf_expand(&(&mid + &err), depth + 2);
            let mut agreed = Vec::new();
            for (a, b) in lo_cf.iter().zip(hi_cf.iter()) {
                if a == b {
                    agreed.push(a.clone());
                } else {
                    break;
                }
            }
            if agreed.len() >= depth + 1 {
                break agreed;
            }
            bits *= 2;
            if bits > max_bits {
                return Err(CjError::PrecisionExhausted(format!(
                    "cannot pin {depth} partial quotients within {max_bits} bits"
                )));
            }
        }
    };
    // fold quotients into convergents p_k/q_k, dropping the a_0 = 0 stage
    let mut out = Vec::new();
    let (mut p2, mut p1) = (BigUint::one(), quotients[0].clone());
    let (mut q2, mut q1) = (BigUint::zero(), BigUint::one());
    for a in quotients.iter().skip(1) {
        let p = a * &p1 + &p2;
        let q = a * &q1 + &q2;
        out.push(Rat::new(BigInt::from(p.clone()), BigInt::from(q.clone())));
        p2 = p1;
        p1 = p;
        q2 = q1;
        q1 = q;
        if out.len() == depth {
            break;
        }
    }
    Ok(out)
}

// ───────────────────────────────────────────────────────────────────────────
// Witness search and verification
// ───────────────────────────────────────────────────────────────────────────

/// A certified Liouville approximation: `|α − approx| ≤ gap_bound <
/// eps·q^{-n_exponent}` with the two-sided enclosure retained.
#[derive(Clone, Debug)]
pub struct LiouvilleWitness {
    pub alpha: Alpha,
    pub q: HugeInt,
    pub eps: Mag,
    pub n_exponent: u64,
    pub gap_bound: Mag,
    pub gap_lower: Mag,
}

impl LiouvilleWitness {
    pub fn threshold(&self) -> Mag {
        self.eps.mul(&self.q.to_mag().pow_i64(-(self.n_exponent as i64)))
    }
}

/// Search budget for witness denominators, in decimal digits.
#[derive(Clone, Copy, Debug)]
pub struct SearchBudget {
    pub max_q_digits: f64,
    pub max_candidates: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        // numbers up to ~10^1000, a thousand digits
        SearchBudget { max_q_digits: 1e3, max_candidates: 64 }
    }
}

/// Finds a witness with `q > q_min` and certified `gap < eps·q^{-n_exponent}`.
pub fn liouville_search(
    oracle: &dyn LiouvilleOracle,
    eps: &Mag,
    n_exponent: u64,
    q_min: &HugeInt,
    budget: &SearchBudget,
) -> Result<LiouvilleWitness> {
    if !oracle.is_liouville() {
        return Err(CjError::Config("oracle is not flagged Liouville".into()));
    }
    assert!(eps.is_positive());
    for (count, w) in oracle.witnesses().enumerate() {
        if count >= budget.max_candidates {
            break;
        }
        if w.q.digits_approx() > budget.max_q_digits {
            return Err(CjError::SearchBudgetExceeded(format!(
                "witness denominators reached ~10^{:.0} digits without satisfying gap < eps·q^-{n_exponent}",
                w.q.digits_approx()
            )));
        }
        if w.q.cmp(q_min) != std::cmp::Ordering::Greater {
            continue;
        }
        let threshold = eps.mul(&w.q.to_mag().pow_i64(-(n_exponent as i64)));
        if w.gap_hi.lt(&threshold) {
            return Ok(LiouvilleWitness {
                alpha: w.alpha,
                q: w.q,
                eps: eps.clone(),
                n_exponent,
                gap_bound: w.gap_hi,
                gap_lower: w.gap_lo,
            });
        }
    }
    Err(CjError::SearchBudgetExceeded(
        "no witness within the candidate budget".into(),
    ))
}

/// Re-verifies a witness against the oracle: true iff a certified enclosure
/// of `|α − approx|` lies strictly below `eps·q^{-N}`.
pub fn verify_witness(
    w: &LiouvilleWitness,
    oracle: &dyn LiouvilleOracle,
    max_bits: u64,
) -> Result<bool> {
    let threshold = w.threshold();
    if let Some(exact) = oracle.exact() {
        // a rational target can coincide with the witness (gap zero)
        if let Some(a) = w.alpha.to_plain_rat() {
            if a == exact {
                return Ok(threshold.is_positive());
            }
        }
    }
    let (lo, hi) = oracle.gap_enclosure(&w.alpha, &threshold, max_bits)?;
    if hi.lt(&threshold) {
        return Ok(true);
    }
    if !lo.lt(&threshold) {
        return Ok(false);
    }
    Err(CjError::PrecisionExhausted(
        "witness gap enclosure straddles the threshold".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat;

    #[test]
    fn golden_convergents_prefix() {
        let o = GoldenMeanOracle;
        let c = convergents(&o, 4, 1 << 20).unwrap();
        assert_eq!(c, vec![rat(1, 1), rat(1, 2), rat(2, 3), rat(3, 5)]);
    }

    #[test]
    fn factorial_series_convergents_contain_truncation() {
        let o = FactorialSeriesOracle::new(10);
        let c = convergents(&o, 4, 1 << 22).unwrap();
        assert!(c.contains(&rat(11, 100)), "convergents: {c:?}");
        // denominators strictly increase
        for w in c.windows(2) {
            assert!(w[0].denom() < w[1].denom());
        }
        // consecutive convergents straddle the target
        let a = o.approx(400);
        for w in c.windows(2) {
            assert!((&w[0] - &a).is_negative() != (&w[1] - &a).is_negative());
        }
    }

    #[test]
    fn rational_oracle_terminates() {
        let o = RationalOracle(rat(1, 3));
        let c = convergents(&o, 5, 1 << 20).unwrap();
        assert_eq!(c, vec![rat(1, 3)]);
    }

    #[test]
    fn factorial_witness_examples() {
        let o = FactorialSeriesOracle::new(10);
        let b = SearchBudget::default();
        // eps = 1, N = 2, q_min = 10 → 11/100 with gap < 2e-6 < 1e-4
        let w = liouville_search(&o, &Mag::one(10), 2, &HugeInt::from_u64(10, 10), &b).unwrap();
        assert_eq!(w.alpha.to_plain_rat(), Some(rat(11, 100)));
        assert!(w.gap_bound.lt(&w.threshold()));
        assert!(verify_witness(&w, &o, 1 << 22).unwrap());
        // eps = 1, N = 3, q_min = 10³ → 110001/10^6 with gap < 2e-24 < 1e-18
        let w2 = liouville_search(&o, &Mag::one(10), 3, &HugeInt::from_u64(1000, 10), &b).unwrap();
        assert_eq!(w2.alpha.to_plain_rat(), Some(rat(110_001, 1_000_000)));
        assert!(verify_witness(&w2, &o, 1 << 22).unwrap());
        // monotonicity: the same witness passes at smaller exponent
        let w1 = LiouvilleWitness { n_exponent: 2, ..w2.clone() };
        assert!(w1.gap_bound.lt(&w1.threshold()));
    }

    #[test]
    fn witness_symbolic_denominators() {
        let o = FactorialSeriesOracle::new(10);
        let b = SearchBudget { max_q_digits: 1e80, max_candidates: 64 };
        // a deliberately brutal requirement drives q into structural range
        let eps = Mag::new(rat(1, 1), 10, num_bigint::BigInt::from(-1000));
        let w = liouville_search(&o, &eps, 48, &HugeInt::from_u64(1, 10), &b).unwrap();
        assert!(w.q.digits_approx() > 1e10, "q ~ 10^{:.0}", w.q.digits_approx());
        assert!(w.alpha.to_plain_rat().is_none());
        assert!(verify_witness(&w, &o, 1 << 22).unwrap());
    }

    #[test]
    fn budget_cap_binds() {
        let o = FactorialSeriesOracle::new(10);
        let b = SearchBudget { max_q_digits: 10.0, max_candidates: 64 };
        let eps = Mag::new(rat(1, 1), 10, num_bigint::BigInt::from(-50));
        let err = liouville_search(&o, &eps, 6, &HugeInt::from_u64(1, 10), &b);
        assert!(matches!(err, Err(CjError::SearchBudgetExceeded(_))));
    }

    #[test]
    fn false_witness_detected() {
        let o = FactorialSeriesOracle::new(10);
        // claim |α − 1/2| < 1e-3·2^-5: the true gap is ≈ 0.39
        let w = LiouvilleWitness {
            alpha: Alpha::Plain(rat(1, 2)),
            q: HugeInt::from_u64(2, 10),
            eps: Mag::from_rat(&rat(1, 1000), 10),
            n_exponent: 5,
            gap_bound: Mag::from_rat(&rat(1, 100_000), 10),
            gap_lower: Mag::zero(10),
        };
        assert!(!verify_witness(&w, &o, 1 << 22).unwrap());
    }

    #[test]
    fn planted_quotients_scale() {
        let o = PlantedQuotientOracle::new(10, 8);
        let ws: Vec<_> = o.witnesses().take(4).collect();
        // denominators strictly increase and stay materializable early
        assert!(ws[0].q.cmp(&ws[1].q) == std::cmp::Ordering::Less);
        let d3 = ws[2].q.digits_approx();
        assert!(d3 > 10.0 && d3 < 1e4, "q_3 ~ 10^{d3:.0}");
        // every convergent is an extreme-quality witness: gap ≪ q^{-10}
        for w in &ws[1..3] {
            let thr = w.q.to_mag().pow_i64(-10);
            assert!(w.gap_hi.lt(&thr));
        }
        // the enclosure is consistent with a direct computation one level up
        let b = SearchBudget { max_q_digits: 1e6, max_candidates: 16 };
        let w = liouville_search(&o, &Mag::one(10), 10, &HugeInt::from_u64(1, 10), &b).unwrap();
        assert!(verify_witness(&w, &o, 1 << 22).unwrap());
    }

    #[test]
    fn golden_any_convergent_satisfies_exponent_one() {
        // eps = 1, N = 1: |α − p/q| < q^{-2} ≤ q^{-1} for any convergent
        let o = GoldenMeanOracle;
        for w in o.witnesses().take(8) {
            let thr = w.q.to_mag().pow_i64(-1);
            assert!(w.gap_hi.lt(&thr));
        }
    }
}
