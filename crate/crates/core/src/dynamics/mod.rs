//! Polynomial maps over Q: iteration, reduction, root structure, the orbit
//! of zero, the preperiodic families, and rational preimages.

mod poly;
mod resultant;

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use poly::{IntegerForm, Poly, SmallForm};
pub use resultant::{discriminant, resultant, resultant_formal, resultant_formal_int};

use crate::exactnum::{Factorizer, PrimeSet, Rational};
use crate::heights::{height_bounds, naive_height, HeightBound};

/// Orbit values whose numerator plus denominator exceed this many bits abort.
pub const DEFAULT_BIT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("polynomial is identically zero")]
    ZeroPolynomial,
    #[error("degree {degree} is below the required minimum {min}")]
    DegreeTooSmall { degree: usize, min: usize },
    #[error("orbit value reached {bits} bits, over the budget of {budget}")]
    BitsizeExceeded { bits: u64, budget: u64 },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("prime {0} does not fit in 64 bits")]
    PrimeTooLarge(BigUint),
    #[error("{0}")]
    Parse(String),
}

fn bitsize(r: &Rational) -> u64 {
    r.numer().bits() + r.denom().bits()
}

fn check_budget(r: &Rational, budget: u64) -> Result<(), DynamicsError> {
    let bits = bitsize(r);
    if bits > budget {
        Err(DynamicsError::BitsizeExceeded { bits, budget })
    } else {
        Ok(())
    }
}

pub fn eval(f: &Poly, alpha: &Rational) -> Rational {
    f.eval(alpha)
}

pub fn iterate_eval(f: &Poly, alpha: &Rational, n: usize) -> Result<Rational, DynamicsError> {
    iterate_eval_budget(f, alpha, n, DEFAULT_BIT_BUDGET)
}

pub fn iterate_eval_budget(
    f: &Poly,
    alpha: &Rational,
    n: usize,
    budget: u64,
) -> Result<Rational, DynamicsError> {
    let mut beta = alpha.clone();
    for _ in 0..n {
        beta = f.eval(&beta);
        check_budget(&beta, budget)?;
    }
    Ok(beta)
}

/// `[alpha, f(alpha), ..., f^n(alpha)]`.
pub fn orbit(
    f: &Poly,
    alpha: &Rational,
    n: usize,
    budget: u64,
) -> Result<Vec<Rational>, DynamicsError> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(alpha.clone());
    for i in 0..n {
        let next = f.eval(&out[i]);
        check_budget(&next, budget)?;
        out.push(next);
    }
    Ok(out)
}

fn primes_into_set(
    primes: impl IntoIterator<Item = BigUint>,
    set: &mut PrimeSet,
) -> Result<(), DynamicsError> {
    for p in primes {
        let small = p.to_u64().ok_or_else(|| DynamicsError::PrimeTooLarge(p.clone()))?;
        set.insert(small).expect("factorization yields primes");
    }
    Ok(())
}

/// Primes where some coefficient has a denominator or the leading
/// coefficient is divisible by `p`.
pub fn bad_reduction_primes(f: &Poly) -> Result<PrimeSet, DynamicsError> {
    let fz = Factorizer::default();
    let mut set = PrimeSet::empty();
    for c in f.coeffs() {
        primes_into_set(fz.factor_uint(c.denom().magnitude()).into_keys(), &mut set)?;
    }
    primes_into_set(
        fz.factor_uint(f.leading().numer().magnitude()).into_keys(),
        &mut set,
    )?;
    Ok(set)
}

/// `S` together with the primes of bad reduction of `f`.
pub fn s_f(f: &Poly, s: &PrimeSet) -> Result<PrimeSet, DynamicsError> {
    Ok(s.union(&bad_reduction_primes(f)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimpleRoots {
    pub simple: bool,
    #[serde(with = "crate::serde_rational")]
    pub discriminant: Rational,
}

pub fn has_simple_roots(f: &Poly) -> SimpleRoots {
    let disc = discriminant(f);
    SimpleRoots {
        simple: !disc.is_zero(),
        discriminant: disc,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OrbitKind {
    Periodic,
    StrictlyPreperiodic,
    Wandering,
}

impl fmt::Display for OrbitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrbitKind::Periodic => "periodic",
            OrbitKind::StrictlyPreperiodic => "strictly preperiodic",
            OrbitKind::Wandering => "wandering",
        })
    }
}

/// Outcome of the orbit decision procedure.
///
/// For preperiodic points `tail` lists the orbit up to (not including) the
/// first repeated value and `cycle_start` is the index that value first
/// appeared at. For wandering points `tail` ends with the first value above
/// the escape threshold, whose height is `witness_height`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub kind: OrbitKind,
    #[serde(serialize_with = "crate::serde_rational::vec::serialize")]
    pub tail: Vec<Rational>,
    pub cycle_start: Option<usize>,
    pub witness_height: Option<f64>,
    pub escape_threshold: f64,
}

pub type ZeroClassification = Classification;

/// Decides whether `alpha` is periodic, strictly preperiodic or wandering.
///
/// Terminates because only finitely many rationals lie below the escape
/// threshold, and above it the one-step lower bound forces strict growth.
pub fn classify_point(
    f: &Poly,
    alpha: &Rational,
    bound: &HeightBound,
    budget: u64,
) -> Result<Classification, DynamicsError> {
    let threshold = bound.escape_threshold();
    let mut tail: Vec<Rational> = Vec::new();
    let mut beta = alpha.clone();
    loop {
        if let Some(pos) = tail.iter().position(|t| t == &beta) {
            let kind = if pos == 0 {
                OrbitKind::Periodic
            } else {
                OrbitKind::StrictlyPreperiodic
            };
            return Ok(Classification {
                kind,
                tail,
                cycle_start: Some(pos),
                witness_height: None,
                escape_threshold: threshold,
            });
        }
        let h = naive_height(&beta);
        tail.push(beta.clone());
        if h > threshold {
            return Ok(Classification {
                kind: OrbitKind::Wandering,
                tail,
                cycle_start: None,
                witness_height: Some(h),
                escape_threshold: threshold,
            });
        }
        beta = f.eval(&beta);
        check_budget(&beta, budget)?;
    }
}

pub fn classify_zero(f: &Poly) -> Result<ZeroClassification, DynamicsError> {
    let bound = height_bounds(f)?;
    classify_point(f, &Rational::zero(), &bound, DEFAULT_BIT_BUDGET)
}

/// `X^n (X^m - 1) + zeta` for a rational root of unity `zeta` of order
/// dividing `m`.
pub fn family_a(n: u32, m: u32, zeta: i32) -> Result<Poly, DynamicsError> {
    if n < 1 || m < 1 || n + m < 3 {
        return Err(DynamicsError::InvalidParameters(format!(
            "need n, m >= 1 and n + m >= 3, got n = {n}, m = {m}"
        )));
    }
    match zeta {
        1 => {}
        -1 if m % 2 == 0 => {}
        -1 => {
            return Err(DynamicsError::InvalidParameters(format!(
                "zeta = -1 has order 2, which does not divide m = {m}"
            )))
        }
        _ => {
            return Err(DynamicsError::InvalidParameters(format!(
                "zeta must be a rational root of unity (1 or -1), got {zeta}"
            )))
        }
    }
    let mut coeffs = vec![Rational::zero(); (n + m) as usize + 1];
    coeffs[0] = Rational::from_integer(zeta.into());
    coeffs[n as usize] = -Rational::one();
    coeffs[(n + m) as usize] = Rational::one();
    Poly::new(coeffs)
}

/// Whether `b^k k^k = (k+1)^(k+1)`.
pub fn family_b_degenerate(k: u32, b: &Rational) -> bool {
    let lhs = num_traits::pow(b.clone(), k as usize)
        * Rational::from_integer(BigInt::from(k).pow(k));
    lhs == Rational::from_integer(BigInt::from(k + 1).pow(k + 1))
}

/// `X^k (X - b) + b`, requiring `b != 0` and `b^k k^k != (k+1)^(k+1)`.
pub fn family_b(k: u32, b: &Rational) -> Result<Poly, DynamicsError> {
    if k < 2 {
        return Err(DynamicsError::InvalidParameters(format!(
            "need k >= 2, got {k}"
        )));
    }
    if b.is_zero() {
        return Err(DynamicsError::InvalidParameters("b must be nonzero".into()));
    }
    if family_b_degenerate(k, b) {
        return Err(DynamicsError::InvalidParameters(format!(
            "b^k k^k = (k+1)^(k+1) for k = {k}, b = {b}"
        )));
    }
    let mut coeffs = vec![Rational::zero(); k as usize + 2];
    coeffs[0] = b.clone();
    coeffs[k as usize] = -b.clone();
    coeffs[k as usize + 1] = Rational::one();
    Poly::new(coeffs)
}

fn divisors(n: &BigUint) -> Vec<BigUint> {
    let mut out = vec![BigUint::one()];
    for (p, e) in Factorizer::default().factor_uint(n) {
        let current = out.clone();
        let mut pk = BigUint::one();
        for _ in 0..e {
            pk *= &p;
            out.extend(current.iter().map(|d| d * &pk));
        }
    }
    out
}

/// All rational `x` with `f(x) = beta`, by the rational root theorem.
pub fn rational_preimages(f: &Poly, beta: &Rational) -> Vec<Rational> {
    let Some(g) = f.shift_constant(beta) else {
        // f is the constant beta: every rational is a preimage; report none.
        return Vec::new();
    };
    if g.degree() == 0 {
        return Vec::new();
    }
    let form = g.integer_form();
    let mut roots = BTreeSet::new();
    let low = form
        .coeffs
        .iter()
        .position(|c| !c.is_zero())
        .expect("nonzero polynomial");
    if low > 0 {
        roots.insert(Rational::zero());
    }
    if low < g.degree() {
        let nums = divisors(form.coeffs[low].magnitude());
        let dens = divisors(form.coeffs[g.degree()].magnitude());
        for u in &nums {
            for w in &dens {
                if !u.gcd(w).is_one() {
                    continue;
                }
                for sign in [1, -1] {
                    let cand = Rational::new(
                        BigInt::from(u.clone()) * sign,
                        BigInt::from(w.clone()),
                    );
                    if g.eval(&cand).is_zero() {
                        roots.insert(cand);
                    }
                }
            }
        }
    }
    roots.into_iter().collect()
}

/// Hypothesis sets of the finiteness theorems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    /// degree >= 3 and simple roots
    U,
    /// additionally `f^(k)(0) != 0` for `k = 1..=m`
    Vm(u32),
    /// additionally 0 strictly preperiodic
    V0,
    /// additionally 0 not periodic
    Abc,
}

impl std::str::FromStr for Hypothesis {
    type Err = DynamicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let t = t.strip_suffix("-thm").unwrap_or(&t);
        match t {
            "u" => Ok(Hypothesis::U),
            "v0" => Ok(Hypothesis::V0),
            "abc" => Ok(Hypothesis::Abc),
            _ => {
                let m = t
                    .strip_prefix("vm")
                    .or_else(|| t.strip_prefix('v'))
                    .map(|r| r.trim_start_matches(['(', '=', ':']).trim_end_matches(')'))
                    .and_then(|r| r.parse::<u32>().ok())
                    .filter(|&m| m >= 1);
                m.map(Hypothesis::Vm).ok_or_else(|| {
                    DynamicsError::Parse(format!(
                        "unknown theorem {s:?}; expected U, Vm(<m>), V0 or abc"
                    ))
                })
            }
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hypothesis::U => f.write_str("U"),
            Hypothesis::Vm(m) => write!(f, "Vm({m})"),
            Hypothesis::V0 => f.write_str("V0"),
            Hypothesis::Abc => f.write_str("abc"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreconditionReport {
    pub hypothesis: Hypothesis,
    pub degree_ok: bool,
    pub simple_roots_ok: bool,
    pub zero_condition_ok: bool,
    pub zero_condition_kind: String,
    #[serde(with = "crate::serde_rational")]
    pub discriminant: Rational,
    pub details: Vec<String>,
}

impl PreconditionReport {
    pub fn all_ok(&self) -> bool {
        self.degree_ok && self.simple_roots_ok && self.zero_condition_ok
    }
}

pub fn precondition_report(
    f: &Poly,
    hypothesis: Hypothesis,
) -> Result<PreconditionReport, DynamicsError> {
    let mut details = Vec::new();
    let degree_ok = f.degree() >= 3;
    details.push(format!("degree {} (need >= 3)", f.degree()));
    let roots = has_simple_roots(f);
    details.push(format!("discriminant {}", roots.discriminant));

    let needs_orbit = !matches!(hypothesis, Hypothesis::U);
    let classification = if needs_orbit && f.degree() >= 2 {
        Some(classify_zero(f)?)
    } else {
        None
    };
    if let Some(c) = &classification {
        let tail: Vec<String> = c.tail.iter().map(ToString::to_string).collect();
        details.push(format!("orbit of 0: {} ({})", tail.join(" -> "), c.kind));
    }
    let kind = classification.as_ref().map(|c| c.kind);

    let (zero_condition_ok, zero_condition_kind) = match hypothesis {
        Hypothesis::U => (true, "none".to_string()),
        Hypothesis::Vm(m) => {
            let values = orbit(f, &Rational::zero(), m as usize, DEFAULT_BIT_BUDGET)?;
            let ok = values[1..].iter().all(|v| !v.is_zero());
            (ok, format!("f^(k)(0) != 0 for k = 1..{m}"))
        }
        Hypothesis::V0 => (
            kind == Some(OrbitKind::StrictlyPreperiodic),
            "0 in PrePer(f) \\ Per(f)".to_string(),
        ),
        Hypothesis::Abc => (
            kind.is_some_and(|k| k != OrbitKind::Periodic),
            "0 not in Per(f)".to_string(),
        ),
    };
    Ok(PreconditionReport {
        hypothesis,
        degree_ok,
        simple_roots_ok: roots.simple,
        zero_condition_ok,
        zero_condition_kind,
        discriminant: roots.discriminant,
        details,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactnum::parse_rational;

    fn q(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    fn p(s: &str) -> Poly {
        s.parse().unwrap()
    }

    fn set(ps: &[u64]) -> PrimeSet {
        PrimeSet::new(ps.iter().copied()).unwrap()
    }

    #[test]
    fn iterate_examples() {
        let f = p("X^3-X^2+1");
        assert_eq!(iterate_eval(&f, &q("7/3"), 0).unwrap(), q("7/3"));
        assert_eq!(iterate_eval(&f, &q("0"), 2).unwrap(), q("1"));
        assert_eq!(iterate_eval(&f, &q("2"), 2).unwrap(), q("101"));
        assert!(matches!(
            iterate_eval_budget(&f, &q("2"), 10, 200),
            Err(DynamicsError::BitsizeExceeded { budget: 200, .. })
        ));
    }

    #[test]
    fn bad_reduction_examples() {
        assert_eq!(bad_reduction_primes(&p("X^3-X^2+1")).unwrap(), PrimeSet::empty());
        assert_eq!(bad_reduction_primes(&p("(1/6)X^3+5")).unwrap(), set(&[2, 3]));
        assert_eq!(bad_reduction_primes(&p("6X^3+1")).unwrap(), set(&[2, 3]));
        assert_eq!(bad_reduction_primes(&p("X^3+(1/5)X")).unwrap(), set(&[5]));
    }

    #[test]
    fn s_f_examples() {
        assert_eq!(s_f(&p("X^3-X^2+1"), &set(&[5])).unwrap(), set(&[5]));
        assert_eq!(s_f(&p("(1/6)X^3+5"), &set(&[5])).unwrap(), set(&[2, 3, 5]));
        assert_eq!(s_f(&p("6X^3+1"), &PrimeSet::empty()).unwrap(), set(&[2, 3]));
    }

    #[test]
    fn simple_roots_examples() {
        let r = has_simple_roots(&p("X^3-X^2+1"));
        assert!(r.simple);
        assert_eq!(r.discriminant, q("-23"));
        assert!(!has_simple_roots(&p("2X^4-2X^2")).simple);
        assert!(!has_simple_roots(&p("X^3")).simple);
    }

    #[test]
    fn classify_zero_examples() {
        let c = classify_zero(&p("X^3-X")).unwrap();
        assert_eq!(c.kind, OrbitKind::Periodic);
        assert_eq!(c.tail, vec![q("0")]);

        let c = classify_zero(&p("X^3-X^2+1")).unwrap();
        assert_eq!(c.kind, OrbitKind::StrictlyPreperiodic);
        assert_eq!(c.tail, vec![q("0"), q("1")]);
        assert_eq!(c.cycle_start, Some(1));

        let c = classify_zero(&p("X^3+X-1")).unwrap();
        assert_eq!(c.kind, OrbitKind::Wandering);
        assert_eq!(&c.tail[..3], &[q("0"), q("-1"), q("-3")]);
        assert!(c.witness_height.unwrap() > c.escape_threshold);

        // 0 -> 1 -> 0 is a 2-cycle
        let c = classify_zero(&p("-X^3+1")).unwrap();
        assert_eq!(c.kind, OrbitKind::Periodic);
        assert_eq!(c.tail, vec![q("0"), q("1")]);
    }

    #[test]
    fn family_a_examples() {
        assert_eq!(family_a(2, 1, 1).unwrap(), p("X^3-X^2+1"));
        let f = family_a(1, 2, -1).unwrap();
        assert_eq!(f, p("X^3-X-1"));
        assert_eq!(iterate_eval(&f, &q("0"), 1).unwrap(), q("-1"));
        assert_eq!(iterate_eval(&f, &q("-1"), 1).unwrap(), q("-1"));
        assert!(matches!(family_a(1, 1, 1), Err(DynamicsError::InvalidParameters(_))));
        assert!(matches!(family_a(2, 1, -1), Err(DynamicsError::InvalidParameters(_))));
        assert!(matches!(family_a(2, 2, 3), Err(DynamicsError::InvalidParameters(_))));
    }

    #[test]
    fn family_b_examples() {
        assert_eq!(family_b(2, &q("1")).unwrap(), p("X^3-X^2+1"));
        let f = family_b(2, &q("2")).unwrap();
        assert_eq!(f, p("X^3-2X^2+2"));
        let c = classify_zero(&f).unwrap();
        assert_eq!(c.kind, OrbitKind::StrictlyPreperiodic);
        assert_eq!(c.tail, vec![q("0"), q("2")]);
        // b^k k^k = (k+1)^(k+1) needs k+1 to be a perfect k-th power, which
        // never happens for k >= 2, so the condition only bites at k = 1.
        assert!(family_b_degenerate(1, &q("4")));
        for k in 2..6 {
            for b in ["27/4", "3", "-3", "4/3", "256/27", "16/9"] {
                assert!(!family_b_degenerate(k, &q(b)));
                assert!(family_b(k, &q(b)).is_ok());
            }
        }
        assert!(matches!(family_b(2, &q("0")), Err(DynamicsError::InvalidParameters(_))));
        assert!(matches!(family_b(1, &q("1")), Err(DynamicsError::InvalidParameters(_))));
    }

    #[test]
    fn preimage_examples() {
        let f = p("X^3-X^2+1");
        assert_eq!(rational_preimages(&f, &q("1")), vec![q("0"), q("1")]);
        assert_eq!(rational_preimages(&p("X^3"), &q("8")), vec![q("2")]);
        assert_eq!(rational_preimages(&f, &q("5")), vec![q("2")]);
        let g = p("6X^2-5X+1");
        assert_eq!(rational_preimages(&g, &q("0")), vec![q("1/3"), q("1/2")]);
    }

    #[test]
    fn precondition_examples() {
        let r = precondition_report(&p("X^3-X^2+1"), Hypothesis::V0).unwrap();
        assert!(r.all_ok(), "{r:?}");
        let r = precondition_report(&p("2X^4-2X^2"), Hypothesis::U).unwrap();
        assert!(!r.simple_roots_ok);
        let r = precondition_report(&p("X^3-X"), Hypothesis::Abc).unwrap();
        assert!(!r.zero_condition_ok);
        let r = precondition_report(&p("X^3-X^2+1"), Hypothesis::Vm(5)).unwrap();
        assert!(r.zero_condition_ok);
        let r = precondition_report(&p("X^3-X+1"), Hypothesis::Vm(3)).unwrap();
        assert!(r.zero_condition_ok);
        let r = precondition_report(&p("X^3+X"), Hypothesis::Vm(1)).unwrap();
        assert!(!r.zero_condition_ok);
    }

    #[test]
    fn hypothesis_parsing() {
        assert_eq!("V0".parse::<Hypothesis>().unwrap(), Hypothesis::V0);
        assert_eq!("U-thm".parse::<Hypothesis>().unwrap(), Hypothesis::U);
        assert_eq!("Vm(3)".parse::<Hypothesis>().unwrap(), Hypothesis::Vm(3));
        assert_eq!("vm=2".parse::<Hypothesis>().unwrap(), Hypothesis::Vm(2));
        assert_eq!("abc".parse::<Hypothesis>().unwrap(), Hypothesis::Abc);
        assert!("W".parse::<Hypothesis>().is_err());
    }
}
