//! abc-style diagnostics over Q: triple quality, the Granville-type gap
//! for polynomial values, and the unconditional conductor-versus-height
//! chain satisfied by every orbit power relation with `l >= 2`.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{has_simple_roots, iterate_eval, s_f, DynamicsError, Poly};
use crate::exactnum::{ln_big, radical_log_outside, Factorizer, PrimeSet, Rational};
use crate::heights::{height_bounds, naive_height};
use crate::powerrel::{RelationHit, RelationKind};
use crate::search::{scan_pairs, ScanOptions};

/// Comparison slack for the double-precision sides of the inequalities.
pub const INEQUALITY_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbcError {
    #[error("invalid abc triple: {0}")]
    InvalidTriple(String),
    #[error("conductor readings need a V relation with l >= 2 and nonzero orbit values: {0}")]
    WrongHitKind(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Pairwise coprime positive `a + b = c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbcTriple {
    a: BigUint,
    b: BigUint,
    c: BigUint,
}

impl AbcTriple {
    pub fn new(a: BigUint, b: BigUint, c: BigUint) -> Result<Self, AbcError> {
        if a.is_zero() || b.is_zero() {
            return Err(AbcError::InvalidTriple("entries must be positive".into()));
        }
        if &a + &b != c {
            return Err(AbcError::InvalidTriple(format!("{a} + {b} != {c}")));
        }
        if !a.gcd(&b).is_one() {
            return Err(AbcError::InvalidTriple(format!("gcd({a}, {b}) != 1")));
        }
        // a + b = c with gcd(a, b) = 1 forces the other two gcds to be 1
        Ok(Self { a, b, c })
    }

    pub fn from_u64(a: u64, b: u64, c: u64) -> Result<Self, AbcError> {
        Self::new(a.into(), b.into(), c.into())
    }

    pub fn c(&self) -> &BigUint {
        &self.c
    }

    pub fn radical(&self) -> BigUint {
        let fz = Factorizer::default();
        let primes: BTreeSet<BigUint> = [&self.a, &self.b, &self.c]
            .into_iter()
            .flat_map(|n| fz.factor_uint(n).into_keys())
            .collect();
        primes.into_iter().product()
    }
}

/// `log c / log rad(abc)`.
pub fn abc_quality(t: &AbcTriple) -> f64 {
    ln_big(&t.c) / ln_big(&t.radical())
}

/// Both sides of the conductor chain for one V relation
/// `f^(n)(alpha) = a^l alpha` with `l >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductorReading {
    /// Sum of `log p` over primes outside `S_f` dividing `f^(n)(alpha)`.
    pub radical_sum: f64,
    /// `h(f^(n)(alpha)) / 2 + h(alpha)`
    pub rhs_chain: f64,
    /// `(d^n / 2 + 1) h(alpha) + (d^n / 2) c1`
    pub rhs_bound: f64,
    /// `(d - 1 - eps) h(f^(n-1)(alpha))`
    pub granville_lhs: f64,
    pub eps: f64,
    pub chain_slack: f64,
    pub bound_slack: f64,
    /// `granville_lhs - radical_sum`, reported without judgment.
    pub granville_gap: f64,
    pub chain_holds: bool,
    pub bound_holds: bool,
}

pub fn conductor_reading(
    f: &Poly,
    s: &PrimeSet,
    hit: &RelationHit,
    eps: f64,
) -> Result<ConductorReading, AbcError> {
    let is_v = hit.kind == RelationKind::V
        || (hit.kind == RelationKind::TildeV && hit.k == 0);
    if !is_v {
        return Err(AbcError::WrongHitKind(format!("{} hit", hit.kind)));
    }
    let ell = hit.witness.exponent;
    if ell < 2 {
        return Err(AbcError::WrongHitKind(format!("exponent {ell}")));
    }
    let alpha = &hit.alpha;
    let n = hit.n as usize;
    let previous = iterate_eval(f, alpha, n - 1)?;
    let value = f.eval(&previous);
    if alpha.is_zero() || value.is_zero() {
        return Err(AbcError::WrongHitKind("zero orbit value".into()));
    }
    let sf = s_f(f, s)?;
    let bound = height_bounds(f)?;

    // every prime outside S_f dividing a^l alpha divides num(a) or num(alpha)
    let fz = Factorizer::default();
    let candidates: BTreeSet<BigUint> = [hit.witness.base.numer(), alpha.numer()]
        .into_iter()
        .flat_map(|x| fz.factor_uint(x.magnitude()).into_keys())
        .filter(|p| !sf.contains_big(p))
        .collect();
    let radical_sum: f64 = candidates
        .iter()
        .filter(|p| (value.numer().magnitude() % *p).is_zero())
        .map(ln_big)
        .fold(0.0, |acc, x| acc + x);

    let d = f.degree() as f64;
    let dn = d.powi(n as i32);
    let h_alpha = naive_height(alpha);
    let rhs_chain = 0.5 * naive_height(&value) + h_alpha;
    let rhs_bound = (0.5 * dn + 1.0) * h_alpha + 0.5 * dn * bound.c1;
    let granville_lhs = (d - 1.0 - eps) * naive_height(&previous);
    Ok(ConductorReading {
        radical_sum,
        rhs_chain,
        rhs_bound,
        granville_lhs,
        eps,
        chain_slack: rhs_chain - radical_sum,
        bound_slack: rhs_bound - radical_sum,
        granville_gap: granville_lhs - radical_sum,
        chain_holds: radical_sum <= rhs_chain + INEQUALITY_SLACK,
        bound_holds: radical_sum <= rhs_bound + INEQUALITY_SLACK,
    })
}

/// Which homogenization fixes the degree factor in the Granville bound:
/// `Y^(d+1) f(X/Y)` gives `d - 1 - eps`, `Y^d f(X/Y)` gives `d - 2 - eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum GranvilleDegree {
    #[default]
    DMinus1,
    DMinus2,
}

impl GranvilleDegree {
    pub fn factor(self, d: usize, eps: f64) -> f64 {
        match self {
            GranvilleDegree::DMinus1 => d as f64 - 1.0 - eps,
            GranvilleDegree::DMinus2 => d as f64 - 2.0 - eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranvilleRow {
    #[serde(with = "crate::serde_rational")]
    pub alpha: Rational,
    pub height: f64,
    pub radical_sum: f64,
    pub lhs: f64,
    pub gap: f64,
    /// Running maximum of `gap` in enumeration order.
    #[serde(skip)]
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GranvilleTable {
    pub rows: Vec<GranvilleRow>,
    /// Enumerated points with `f(alpha) = 0`, where the radical is undefined.
    pub roots_skipped: usize,
}

impl GranvilleTable {
    pub fn max_gap(&self) -> Option<f64> {
        self.rows.last().map(|r| r.envelope)
    }
}

/// Lower envelope of the unknown Granville constant over heights `<= log B`.
pub fn granville_scan(
    f: &Poly,
    s: &PrimeSet,
    bound: u64,
    eps: f64,
    degree: GranvilleDegree,
    options: &ScanOptions,
) -> Result<GranvilleTable, AbcError> {
    if f.degree() < 3 {
        return Err(AbcError::Precondition(format!(
            "degree {} < 3",
            f.degree()
        )));
    }
    if !has_simple_roots(f).simple {
        return Err(AbcError::Precondition("f has a repeated root".into()));
    }
    let sf = s_f(f, s)?;
    let factor = degree.factor(f.degree(), eps);
    let scan = scan_pairs(bound, options, |p, q| {
        let alpha = Rational::new_raw(p.into(), q.into());
        let value = f.eval(&alpha);
        if value.is_zero() {
            return None;
        }
        let height = naive_height(&alpha);
        let radical_sum =
            radical_log_outside(&value, &sf, true).expect("nonzero value has a radical");
        let lhs = factor * height;
        Some(GranvilleRow {
            alpha,
            height,
            radical_sum,
            lhs,
            gap: lhs - radical_sum,
            envelope: 0.0,
        })
    });
    let mut rows = scan.items;
    let mut envelope = f64::NEG_INFINITY;
    for row in &mut rows {
        envelope = envelope.max(row.gap);
        row.envelope = envelope;
    }
    Ok(GranvilleTable {
        roots_skipped: scan.visited as usize - rows.len(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactnum::parse_rational;
    use crate::powerrel::{v_membership, PowerWitness};

    fn q(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    fn p(s: &str) -> Poly {
        s.parse().unwrap()
    }

    #[test]
    fn quality_examples() {
        let t = AbcTriple::from_u64(1, 8, 9).unwrap();
        assert!((abc_quality(&t) - 9f64.ln() / 6f64.ln()).abs() < 1e-12);
        assert!((abc_quality(&t) - 1.2263).abs() < 1e-4);
        let t = AbcTriple::from_u64(1, 1, 2).unwrap();
        assert!((abc_quality(&t) - 1.0).abs() < 1e-12);
        let t = AbcTriple::from_u64(3, 5, 8).unwrap();
        assert!((abc_quality(&t) - 8f64.ln() / 30f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn reyssat_triple() {
        let b = BigUint::from(3u32).pow(10) * 109u32;
        let c = BigUint::from(23u32).pow(5);
        let t = AbcTriple::new(2u32.into(), b, c).unwrap();
        assert!(abc_quality(&t) > 1.6);
    }

    #[test]
    fn invalid_triples() {
        assert!(AbcTriple::from_u64(2, 4, 6).is_err());
        assert!(AbcTriple::from_u64(1, 2, 4).is_err());
        assert!(AbcTriple::from_u64(0, 2, 2).is_err());
    }

    #[test]
    fn pell_hit_reading() {
        let f = p("2X^3-2X");
        let s = PrimeSet::empty();
        let hit = v_membership(&f, &s, &q("3"), 1).unwrap().unwrap();
        let r = conductor_reading(&f, &s, &hit, 0.5).unwrap();
        // f(3) = 48, S_f = {2}: only 3 contributes
        assert!((r.radical_sum - 3f64.ln()).abs() < 1e-12);
        assert!((r.rhs_chain - (0.5 * 48f64.ln() + 3f64.ln())).abs() < 1e-12);
        assert!(r.chain_holds && r.bound_holds);
    }

    #[test]
    fn fraction_hit_reading() {
        let f = p("X^3-X^2+1");
        let s = PrimeSet::new([2]).unwrap();
        let hit = v_membership(&f, &s, &q("4"), 1).unwrap().unwrap();
        let r = conductor_reading(&f, &s, &hit, 0.5).unwrap();
        assert!((r.radical_sum - 7f64.ln()).abs() < 1e-12);
        assert!((r.rhs_chain - (7f64.ln() + 4f64.ln())).abs() < 1e-12);
        assert!(r.chain_slack > 1.0);
    }

    #[test]
    fn empty_radical_when_s_covers_everything() {
        let f = p("X^3-X^2+1");
        let s = PrimeSet::new([2, 7]).unwrap();
        let hit = v_membership(&f, &s, &q("4"), 1).unwrap().unwrap();
        let r = conductor_reading(&f, &s, &hit, 0.5).unwrap();
        assert_eq!(r.radical_sum, 0.0);
    }

    #[test]
    fn wrong_kinds_rejected() {
        let f = p("X^3-X^2+1");
        let hit = RelationHit {
            kind: RelationKind::U,
            alpha: q("4"),
            n: 1,
            k: 0,
            witness: PowerWitness {
                exponent: 2,
                base: q("7"),
            },
            trivial: false,
            preperiodic: false,
            diagnostics: None,
        };
        assert!(matches!(
            conductor_reading(&f, &PrimeSet::empty(), &hit, 0.5),
            Err(AbcError::WrongHitKind(_))
        ));
        let hit = RelationHit {
            kind: RelationKind::V,
            witness: PowerWitness {
                exponent: -1,
                base: q("4/49"),
            },
            ..hit
        };
        assert!(matches!(
            conductor_reading(&f, &PrimeSet::empty(), &hit, 0.5),
            Err(AbcError::WrongHitKind(_))
        ));
    }

    #[test]
    fn granville_small_scan() {
        let f = p("X^3-X^2+1");
        let t = granville_scan(
            &f,
            &PrimeSet::empty(),
            50,
            0.5,
            GranvilleDegree::DMinus1,
            &ScanOptions::default(),
        )
        .unwrap();
        assert!(t.max_gap().unwrap().is_finite());
        let mut prev = f64::NEG_INFINITY;
        for row in &t.rows {
            assert!(row.envelope >= prev);
            prev = row.envelope;
            assert!((row.gap - (row.lhs - row.radical_sum)).abs() < 1e-15);
            if f.eval(&row.alpha).numer().magnitude().is_one() {
                assert_eq!(row.radical_sum, 0.0);
                assert_eq!(row.gap, row.lhs);
            }
        }
        let zero = t.rows.iter().find(|r| r.alpha.is_zero()).unwrap();
        assert_eq!(zero.lhs, 0.0);
        assert!(zero.gap <= 0.0);
    }

    #[test]
    fn granville_requires_simple_roots() {
        assert!(granville_scan(
            &p("2X^4-2X^2"),
            &PrimeSet::empty(),
            5,
            0.5,
            GranvilleDegree::DMinus1,
            &ScanOptions::default()
        )
        .is_err());
    }
}
