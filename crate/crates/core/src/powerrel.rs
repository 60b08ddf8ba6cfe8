//! Deciding `beta = a^l` with `a` an S-integer and `l` outside {0, 1}, and
//! membership tests for the orbit relation sets U, V and V-tilde.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::abcdiag::ConductorReading;
use crate::dynamics::{classify_point, DynamicsError, OrbitKind, Poly, DEFAULT_BIT_BUDGET};
use crate::exactnum::{strip_primes, PrimeSet, Rational};
use crate::heights::{height_bounds, HeightBound};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("the ratio f^(n)(alpha)/alpha is undefined at alpha = 0")]
    ZeroAlpha,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// `(l, a)` with `a^l` equal to the tested value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PowerWitness {
    pub exponent: i64,
    pub base: Rational,
}

impl PowerWitness {
    pub fn value(&self) -> Rational {
        pow_rational(&self.base, self.exponent)
    }
}

impl fmt::Display for PowerWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.exponent, self.base)
    }
}

/// `r^e` for any integer `e`; panics on `0^e` with `e < 0`.
pub fn pow_rational(r: &Rational, e: i64) -> Rational {
    let p = num_traits::pow(r.clone(), e.unsigned_abs() as usize);
    if e < 0 {
        p.recip()
    } else {
        p
    }
}

/// Values `0`, `1` and `-1` are powers of every admissible shape and carry
/// no arithmetic information.
pub fn is_trivial_value(beta: &Rational) -> bool {
    beta.is_zero() || (beta.is_integer() && beta.numer().magnitude().is_one())
}

/// Largest `e` with `n = m^e`; `n >= 2`.
pub fn perfect_power_exponent(n: &BigUint) -> u32 {
    debug_assert!(n > &BigUint::one());
    let mut n = n.clone();
    let mut exponent = 1u32;
    'outer: loop {
        let bits = n.bits() as u32;
        let mut p = 2u32;
        while p <= bits {
            if crate::exactnum::is_prime_u64(p as u64) {
                let r = n.nth_root(p);
                if r.pow(p) == n {
                    exponent *= p;
                    n = r;
                    continue 'outer;
                }
            }
            p += 1;
        }
        return exponent;
    }
}

fn divisors_u32(n: u32) -> Vec<u32> {
    (1..=n).filter(|d| n % d == 0).collect()
}

/// Every exponent `l` for which `beta = a^l` with `a` an S-integer, one
/// canonical base per exponent, ordered by `|l|` and then positive first.
///
/// Over Q this holds iff `beta` is an exact `l`-th power (so `l` divides
/// every valuation), `beta > 0` when `l` is even, and the valuations of
/// `beta` outside `S` are `>= 0` for `l > 0`, `<= 0` for `l < 0`.
/// The values `0`, `1`, `-1` get the single witnesses `(2, 0)`, `(2, 1)`,
/// `(3, -1)`.
pub fn power_representations(beta: &Rational, s: &PrimeSet) -> Vec<PowerWitness> {
    if beta.is_zero() {
        return vec![PowerWitness {
            exponent: 2,
            base: Rational::zero(),
        }];
    }
    if is_trivial_value(beta) {
        let (exponent, base) = if beta.is_positive() { (2, 1) } else { (3, -1) };
        return vec![PowerWitness {
            exponent,
            base: Rational::from_integer(base.into()),
        }];
    }
    let num = beta.numer().magnitude();
    let den = beta.denom().magnitude();
    let positive_ok = strip_primes(den, s).is_one();
    let negative_ok = strip_primes(num, s).is_one();
    if !positive_ok && !negative_ok {
        return Vec::new();
    }
    let exp_of = |n: &BigUint| if n.is_one() { 0 } else { perfect_power_exponent(n) };
    let g = exp_of(num).gcd(&exp_of(den));
    let negative_beta = beta.is_negative();
    let mut out = Vec::new();
    for e in divisors_u32(g) {
        if e % 2 == 0 && negative_beta {
            continue;
        }
        if e == 1 {
            if negative_ok {
                out.push(PowerWitness {
                    exponent: -1,
                    base: beta.recip(),
                });
            }
            continue;
        }
        let root_num = BigInt::from(num.nth_root(e));
        let root_den = BigInt::from(den.nth_root(e));
        let root_num = if negative_beta { -root_num } else { root_num };
        let root = Rational::new(root_num, root_den);
        if positive_ok {
            out.push(PowerWitness {
                exponent: e as i64,
                base: root.clone(),
            });
        }
        if negative_ok {
            out.push(PowerWitness {
                exponent: -(e as i64),
                base: root.recip(),
            });
        }
    }
    out
}

/// Reported witness: the first with `|l| >= 2`, falling back to `l = -1`.
pub fn canonical_witness(witnesses: &[PowerWitness]) -> Option<&PowerWitness> {
    witnesses
        .iter()
        .find(|w| w.exponent != -1)
        .or_else(|| witnesses.first())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RelationKind {
    U,
    V,
    TildeV,
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelationKind::U => "U",
            RelationKind::V => "V",
            RelationKind::TildeV => "TildeV",
        })
    }
}

/// One member of U, V or V-tilde with its witness.
///
/// Equations: U `f(alpha) = a^l`; V `f^(n)(alpha) = a^l alpha`;
/// V-tilde `f^(n+k)(alpha) = a^l f^(k)(alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationHit {
    pub kind: RelationKind,
    pub alpha: Rational,
    pub n: u32,
    pub k: u32,
    pub witness: PowerWitness,
    pub trivial: bool,
    pub preperiodic: bool,
    pub diagnostics: Option<ConductorReading>,
}

impl RelationHit {
    /// Neither a trivial value nor a preperiodic starting point.
    pub fn is_nontrivial(&self) -> bool {
        !self.trivial && !self.preperiodic
    }

    /// Recomputes the defining equation exactly.
    pub fn replay(&self, f: &Poly) -> Result<bool, DynamicsError> {
        let w = &self.witness;
        if w.exponent == 0 || w.exponent == 1 || (w.base.is_zero() && w.exponent < 0) {
            return Ok(false);
        }
        let power = w.value();
        let (lhs, rhs) = match self.kind {
            RelationKind::U => (f.eval(&self.alpha), power),
            RelationKind::V => (
                crate::dynamics::iterate_eval(f, &self.alpha, self.n as usize)?,
                power * &self.alpha,
            ),
            RelationKind::TildeV => {
                let base = crate::dynamics::iterate_eval(f, &self.alpha, self.k as usize)?;
                (
                    crate::dynamics::iterate_eval(f, &base, self.n as usize)?,
                    power * base,
                )
            }
        };
        Ok(lhs == rhs)
    }
}

impl Serialize for RelationHit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(9))?;
        map.serialize_entry("kind", &self.kind)?;
        map.serialize_entry("alpha", &self.alpha.to_string())?;
        map.serialize_entry("n", &self.n)?;
        map.serialize_entry("k", &self.k)?;
        map.serialize_entry("ell", &self.witness.exponent)?;
        map.serialize_entry("a", &self.witness.base.to_string())?;
        map.serialize_entry("trivial", &self.trivial)?;
        map.serialize_entry("preperiodic", &self.preperiodic)?;
        map.serialize_entry("diagnostics", &self.diagnostics)?;
        map.end()
    }
}

/// Result of a V-tilde grid scan: the first hit in `(k, n)` order and the
/// `k` whose base value `f^(k)(alpha)` was zero and therefore skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct TildeVOutcome {
    pub hit: Option<RelationHit>,
    pub zero_k: Vec<u32>,
}

/// Shared state for repeated membership tests against one `(f, S)`.
#[derive(Debug, Clone)]
pub struct RelationContext {
    pub f: Poly,
    pub s: PrimeSet,
    pub bound: Option<HeightBound>,
    pub bit_budget: u64,
}

impl RelationContext {
    pub fn new(f: Poly, s: PrimeSet) -> Self {
        let bound = height_bounds(&f).ok();
        Self {
            f,
            s,
            bound,
            bit_budget: DEFAULT_BIT_BUDGET,
        }
    }

    pub fn with_budget(mut self, bits: u64) -> Self {
        self.bit_budget = bits;
        self
    }

    /// Preperiodicity of `alpha` by the escape-threshold procedure.
    pub fn is_preperiodic(&self, alpha: &Rational) -> Result<bool, DynamicsError> {
        match &self.bound {
            Some(bound) => Ok(classify_point(&self.f, alpha, bound, self.bit_budget)?.kind
                != OrbitKind::Wandering),
            // linear maps: only a repeat within a short window is detected
            None => {
                let values = crate::dynamics::orbit(&self.f, alpha, 8, self.bit_budget)?;
                Ok((1..values.len()).any(|i| values[..i].contains(&values[i])))
            }
        }
    }

    fn make_hit(
        &self,
        kind: RelationKind,
        alpha: &Rational,
        n: u32,
        k: u32,
        value: &Rational,
    ) -> Result<Option<RelationHit>, DynamicsError> {
        let reps = power_representations(value, &self.s);
        let Some(witness) = canonical_witness(&reps) else {
            return Ok(None);
        };
        Ok(Some(RelationHit {
            kind,
            alpha: alpha.clone(),
            n,
            k,
            witness: witness.clone(),
            trivial: is_trivial_value(value),
            preperiodic: self.is_preperiodic(alpha)?,
            diagnostics: None,
        }))
    }

    pub fn u_membership(&self, alpha: &Rational) -> Result<Option<RelationHit>, DynamicsError> {
        let value = self.f.eval(alpha);
        self.make_hit(RelationKind::U, alpha, 1, 0, &value)
    }

    /// First `n` in `1..=n_max` with `f^(n)(alpha) / alpha` a power.
    pub fn v_membership(
        &self,
        alpha: &Rational,
        n_max: u32,
    ) -> Result<Option<RelationHit>, PowerError> {
        if alpha.is_zero() {
            return Err(PowerError::ZeroAlpha);
        }
        let mut beta = alpha.clone();
        for n in 1..=n_max {
            beta = crate::dynamics::iterate_eval_budget(&self.f, &beta, 1, self.bit_budget)?;
            let ratio = &beta / alpha;
            if let Some(hit) = self.make_hit(RelationKind::V, alpha, n, 0, &ratio)? {
                return Ok(Some(hit));
            }
        }
        Ok(None)
    }

    /// Scans `k = 0..=k_max`, `n = 1..=n_max` in `(k, n)` order.
    pub fn tilde_v_membership(
        &self,
        alpha: &Rational,
        n_max: u32,
        k_max: u32,
    ) -> Result<TildeVOutcome, DynamicsError> {
        let values = crate::dynamics::orbit(
            &self.f,
            alpha,
            (n_max + k_max) as usize,
            self.bit_budget,
        )?;
        let mut zero_k = Vec::new();
        for k in 0..=k_max {
            let base = &values[k as usize];
            if base.is_zero() {
                zero_k.push(k);
                continue;
            }
            for n in 1..=n_max {
                let ratio = &values[(n + k) as usize] / base;
                if let Some(hit) = self.make_hit(RelationKind::TildeV, alpha, n, k, &ratio)? {
                    return Ok(TildeVOutcome {
                        hit: Some(hit),
                        zero_k,
                    });
                }
            }
        }
        Ok(TildeVOutcome { hit: None, zero_k })
    }
}

pub fn u_membership(
    f: &Poly,
    s: &PrimeSet,
    alpha: &Rational,
) -> Result<Option<RelationHit>, DynamicsError> {
    RelationContext::new(f.clone(), s.clone()).u_membership(alpha)
}

pub fn v_membership(
    f: &Poly,
    s: &PrimeSet,
    alpha: &Rational,
    n_max: u32,
) -> Result<Option<RelationHit>, PowerError> {
    RelationContext::new(f.clone(), s.clone()).v_membership(alpha, n_max)
}

pub fn tilde_v_membership(
    f: &Poly,
    s: &PrimeSet,
    alpha: &Rational,
    n_max: u32,
    k_max: u32,
) -> Result<TildeVOutcome, DynamicsError> {
    RelationContext::new(f.clone(), s.clone()).tilde_v_membership(alpha, n_max, k_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactnum::{is_s_integer, parse_rational};

    fn q(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    fn p(s: &str) -> Poly {
        s.parse().unwrap()
    }

    fn set(ps: &[u64]) -> PrimeSet {
        PrimeSet::new(ps.iter().copied()).unwrap()
    }

    fn pairs(ws: &[PowerWitness]) -> Vec<(i64, Rational)> {
        ws.iter().map(|w| (w.exponent, w.base.clone())).collect()
    }

    #[test]
    fn perfect_power_exponents() {
        let cases = [(4u32, 2), (8, 3), (64, 6), (12, 1), (1 << 12, 12), (3u32.pow(10), 10), (36, 2)];
        for (n, e) in cases {
            assert_eq!(perfect_power_exponent(&BigUint::from(n)), e, "{n}");
        }
    }

    #[test]
    fn sixteen_over_empty_set() {
        let ws = power_representations(&q("16"), &PrimeSet::empty());
        assert_eq!(pairs(&ws), vec![(2, q("4")), (4, q("2"))]);
    }

    #[test]
    fn fraction_with_denominator_in_s() {
        let ws = power_representations(&q("49/4"), &set(&[2]));
        assert_eq!(pairs(&ws), vec![(2, q("7/2"))]);
        assert!(power_representations(&q("49/4"), &PrimeSet::empty()).is_empty());
    }

    #[test]
    fn no_representation_for_twelve() {
        assert!(power_representations(&q("12"), &PrimeSet::empty()).is_empty());
    }

    #[test]
    fn negative_exponents_and_signs() {
        let ws = power_representations(&q("1/16"), &PrimeSet::empty());
        assert_eq!(pairs(&ws), vec![(-1, q("16")), (-2, q("4")), (-4, q("2"))]);
        assert_eq!(canonical_witness(&ws).unwrap().exponent, -2);

        let ws = power_representations(&q("-8/27"), &set(&[3]));
        assert_eq!(pairs(&ws), vec![(3, q("-2/3"))]);

        let ws = power_representations(&q("-64"), &set(&[2]));
        assert_eq!(
            pairs(&ws),
            vec![(-1, q("-1/64")), (3, q("-4")), (-3, q("-1/4"))]
        );
    }

    #[test]
    fn special_values() {
        assert_eq!(pairs(&power_representations(&q("0"), &PrimeSet::empty())), vec![(2, q("0"))]);
        assert_eq!(pairs(&power_representations(&q("1"), &PrimeSet::empty())), vec![(2, q("1"))]);
        assert_eq!(pairs(&power_representations(&q("-1"), &PrimeSet::empty())), vec![(3, q("-1"))]);
    }

    #[test]
    fn witnesses_replay_and_are_s_integers() {
        let s = set(&[2, 3]);
        for b in ["16", "49/4", "1/16", "-8/27", "-64", "729/64", "1/6", "-243/32"] {
            let beta = q(b);
            for w in power_representations(&beta, &s) {
                assert_eq!(w.value(), beta, "{b} {w}");
                assert!(is_s_integer(&w.base, &s), "{b} {w}");
            }
        }
    }

    #[test]
    fn u_membership_examples() {
        let hit = u_membership(&p("X^3-X^2+1"), &PrimeSet::empty(), &q("4"))
            .unwrap()
            .unwrap();
        assert_eq!((hit.witness.exponent, hit.witness.base.clone()), (2, q("7")));
        assert!(!hit.trivial && !hit.preperiodic);

        let f = p("2X^4-2X^2");
        let hit = u_membership(&f, &PrimeSet::empty(), &q("3")).unwrap().unwrap();
        assert_eq!((hit.witness.exponent, hit.witness.base.clone()), (2, q("12")));
        assert!(hit.replay(&f).unwrap());

        assert!(u_membership(&p("X^3-X^2+1"), &PrimeSet::empty(), &q("2"))
            .unwrap()
            .is_none());
    }

    #[test]
    fn v_membership_examples() {
        let f = p("X^3-X^2+1");
        let hit = v_membership(&f, &set(&[2]), &q("4"), 1).unwrap().unwrap();
        assert_eq!(
            (hit.n, hit.witness.exponent, hit.witness.base.clone()),
            (1, 2, q("7/2"))
        );
        assert!(hit.replay(&f).unwrap());

        let g = p("2X^3-2X");
        let hit = v_membership(&g, &PrimeSet::empty(), &q("3"), 1).unwrap().unwrap();
        assert_eq!((hit.witness.exponent, hit.witness.base.clone()), (2, q("4")));

        let hit = v_membership(&f, &PrimeSet::empty(), &q("1"), 3).unwrap().unwrap();
        assert_eq!(hit.witness.base, q("1"));
        assert!(hit.trivial && hit.preperiodic);

        assert_eq!(
            v_membership(&f, &PrimeSet::empty(), &q("0"), 1),
            Err(PowerError::ZeroAlpha)
        );
    }

    #[test]
    fn tilde_v_examples() {
        let g = p("2X^3-2X");
        let out = tilde_v_membership(&g, &PrimeSet::empty(), &q("3"), 1, 1).unwrap();
        let hit = out.hit.unwrap();
        assert_eq!((hit.k, hit.n, hit.witness.base.clone()), (0, 1, q("4")));
        assert!(hit.replay(&g).unwrap());

        let f = p("X^3-X^2+1");
        let out = tilde_v_membership(&f, &PrimeSet::empty(), &q("2"), 2, 1).unwrap();
        assert!(out.hit.is_none());

        // alpha = 0: f^0(0) = 0 is skipped, f(0) = 1 is fixed
        let out = tilde_v_membership(&f, &PrimeSet::empty(), &q("0"), 1, 1).unwrap();
        assert_eq!(out.zero_k, vec![0]);
        assert!(out.hit.unwrap().preperiodic);
    }

    #[test]
    fn tilde_v_at_k_zero_matches_v() {
        let f = p("X^3-X^2+1");
        let s = set(&[2]);
        for a in ["4", "-3", "5/2", "7", "1/2"] {
            let a = q(a);
            let v = v_membership(&f, &s, &a, 2).unwrap();
            let t = tilde_v_membership(&f, &s, &a, 2, 0).unwrap().hit;
            assert_eq!(v.map(|h| (h.n, h.witness)), t.map(|h| (h.n, h.witness)));
        }
    }

    #[test]
    fn hit_json_shape() {
        let f = p("X^3-X^2+1");
        let hit = v_membership(&f, &set(&[2]), &q("4"), 1).unwrap().unwrap();
        let json = serde_json::to_string(&hit).unwrap();
        assert_eq!(
            json,
            r#"{"kind":"V","alpha":"4","n":1,"k":0,"ell":2,"a":"7/2","trivial":false,"preperiodic":false,"diagnostics":null}"#
        );
    }
}
