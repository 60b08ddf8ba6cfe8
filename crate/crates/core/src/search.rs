//! Bounded-height enumeration of Q, exhaustive U / V / V-tilde searches
//! with stabilization curves, and the Pell-equation families.

use std::io::{self, Write};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::abcdiag::conductor_reading;
use crate::dynamics::{
    iterate_eval_budget, precondition_report, s_f, DynamicsError, Hypothesis, Poly,
    DEFAULT_BIT_BUDGET,
};
use crate::exactnum::{is_s_integer, valuation, Factorizer, PrimeSet, Rational};
use crate::heights::height_bounds;
use crate::powerrel::{
    PowerError, PowerWitness, RelationContext, RelationHit, RelationKind,
};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "ORBITPOW_WORKERS";

/// Deepest iterate a V or V-tilde scan visits unless configured otherwise.
pub const DEFAULT_MAX_DEPTH: u32 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("search bound must be at least 1")]
    InvalidBound,
    #[error("invalid search parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Power(#[from] PowerError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOptions {
    pub workers: usize,
    pub bit_budget: u64,
    pub max_depth: u32,
    /// epsilon used for the Granville column of hit diagnostics
    pub eps: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            workers: default_workers(),
            bit_budget: DEFAULT_BIT_BUDGET,
            max_depth: DEFAULT_MAX_DEPTH,
            eps: 0.5,
        }
    }
}

pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&w| w >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// All `p/q` in lowest terms with `|p| <= b` and `1 <= q <= b`, ordered by
/// `q` and then `p`.
pub fn enumerate_rationals(b: u64) -> impl Iterator<Item = Rational> {
    let b = b as i64;
    (1..=b).flat_map(move |q| {
        (-b..=b)
            .filter(move |p| p.unsigned_abs().gcd(&(q as u64)) == 1)
            .map(move |p| Rational::new_raw(BigInt::from(p), BigInt::from(q)))
    })
}

pub fn count_rationals(b: u64) -> u64 {
    let b = b as i64;
    (1..=b)
        .map(|q| {
            (-b..=b)
                .filter(|p| p.unsigned_abs().gcd(&(q as u64)) == 1)
                .count() as u64
        })
        .sum()
}

/// Output of a parallel scan, in enumeration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutput<T> {
    pub items: Vec<T>,
    pub visited: u64,
}

/// Calls `visit(p, q)` on every enumerated pair. Work is split over `q`
/// and reassembled in order, so the result is independent of `workers`.
pub fn scan_pairs<T, F>(b: u64, options: &ScanOptions, visit: F) -> ScanOutput<T>
where
    T: Send,
    F: Fn(i64, i64) -> Option<T> + Sync,
{
    let bi = b as i64;
    let per_q = |q: i64| -> (Vec<T>, u64) {
        let mut items = Vec::new();
        let mut visited = 0;
        for p in -bi..=bi {
            if p.unsigned_abs().gcd(&(q as u64)) != 1 {
                continue;
            }
            visited += 1;
            if let Some(t) = visit(p, q) {
                items.push(t);
            }
        }
        (items, visited)
    };
    let chunks: Vec<(Vec<T>, u64)> = if options.workers <= 1 {
        (1..=bi).map(per_q).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .expect("thread pool");
        pool.install(|| (1..=bi).into_par_iter().map(per_q).collect())
    };
    let mut out = ScanOutput {
        items: Vec::new(),
        visited: 0,
    };
    for (items, visited) in chunks {
        out.items.extend(items);
        out.visited += visited;
    }
    out
}

/// [`scan_pairs`] with the point handed over as a rational; items are
/// paired with their starting point.
pub fn scan_rationals<T, F>(b: u64, options: &ScanOptions, visit: F) -> Vec<(Rational, T)>
where
    T: Send,
    F: Fn(&Rational) -> Option<T> + Sync,
{
    scan_pairs(b, options, |p, q| {
        let alpha = Rational::new_raw(BigInt::from(p), BigInt::from(q));
        visit(&alpha).map(|t| (alpha, t))
    })
    .items
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SearchParams {
    pub n_max: u32,
    pub k_max: u32,
}

/// Exhaustive search result. The stabilization curve is empirical evidence
/// about finiteness, not a proof: no effective bound is known.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub kind: RelationKind,
    pub polynomial: Poly,
    pub s: PrimeSet,
    pub bound: u64,
    pub params: SearchParams,
    pub hits: Vec<RelationHit>,
    /// `(step, cumulative nontrivial hits with max(|p|, q) <= step)`
    pub counts: Vec<(u64, usize)>,
    pub visited: u64,
    /// points aborted on the bit budget
    pub skipped: u64,
    /// V-tilde grid cells skipped because the base value was zero
    pub zero_skips: u64,
    pub depth_cap: Option<u32>,
    pub warnings: Vec<String>,
    pub invariant_violations: Vec<String>,
}

impl SearchReport {
    pub fn nontrivial_hits(&self) -> impl Iterator<Item = &RelationHit> {
        self.hits.iter().filter(|h| h.is_nontrivial())
    }

    pub fn nontrivial_count(&self) -> usize {
        self.nontrivial_hits().count()
    }

    /// Nontrivial hits whose only witness exponent is `-1`.
    pub fn minus_one_count(&self) -> usize {
        self.nontrivial_hits()
            .filter(|h| h.witness.exponent == -1)
            .count()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for hit in &self.hits {
            serde_json::to_writer(&mut w, hit)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_curve_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bound", "cumulative_nontrivial_hits"])?;
        for (step, count) in &self.counts {
            out.write_record([step.to_string(), count.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn bound_steps(b: u64) -> Vec<u64> {
    if b >= 10 {
        (1..=10).map(|j| j * b / 10).collect()
    } else {
        (1..=b).collect()
    }
}

fn naive_size(alpha: &Rational) -> BigUint {
    alpha
        .numer()
        .magnitude()
        .max(alpha.denom().magnitude())
        .clone()
}

fn stabilization_counts(b: u64, hits: &[RelationHit]) -> Vec<(u64, usize)> {
    let sizes: Vec<BigUint> = hits
        .iter()
        .filter(|h| h.is_nontrivial())
        .map(|h| naive_size(&h.alpha))
        .collect();
    bound_steps(b)
        .into_iter()
        .map(|step| {
            let step_big = BigUint::from(step);
            (step, sizes.iter().filter(|s| **s <= step_big).count())
        })
        .collect()
}

enum Outcome {
    Hit(RelationHit),
    Skipped,
    ZeroSkips(u64),
    HitWithZeroSkips(RelationHit, u64),
}

/// Strips the primes of `s` from `n`.
fn strip_small(mut n: u128, s: &[u64]) -> u128 {
    for &p in s {
        let p = p as u128;
        while n % p == 0 {
            n /= p;
        }
    }
    n
}

/// Cheap necessary condition for `num/den` to be a power of an S-integer:
/// the denominator (for `l > 0`) or the numerator (for `l < 0`) must be
/// supported on `S`.
fn may_be_power(num: i128, den: i128, s: &[u64]) -> bool {
    num == 0
        || strip_small(den.unsigned_abs(), s) == 1
        || strip_small(num.unsigned_abs(), s) == 1
}

fn warn_on_preconditions(f: &Poly, hypothesis: Hypothesis) -> Vec<String> {
    match precondition_report(f, hypothesis) {
        Ok(r) if r.all_ok() => Vec::new(),
        Ok(r) => vec![format!(
            "{f} does not meet the {hypothesis} hypotheses (degree_ok={}, simple_roots_ok={}, zero_condition_ok={}); finiteness is not expected",
            r.degree_ok, r.simple_roots_ok, r.zero_condition_ok
        )],
        Err(e) => vec![format!("could not evaluate {hypothesis} hypotheses: {e}")],
    }
}

fn finish_report(
    kind: RelationKind,
    f: &Poly,
    s: &PrimeSet,
    b: u64,
    params: SearchParams,
    output: ScanOutput<Outcome>,
    options: &ScanOptions,
    mut warnings: Vec<String>,
    depth_cap: Option<u32>,
) -> Result<SearchReport, SearchError> {
    let mut hits = Vec::new();
    let mut skipped = 0;
    let mut zero_skips = 0;
    for item in output.items {
        match item {
            Outcome::Hit(h) => hits.push(h),
            Outcome::Skipped => skipped += 1,
            Outcome::ZeroSkips(z) => zero_skips += z,
            Outcome::HitWithZeroSkips(h, z) => {
                hits.push(h);
                zero_skips += z;
            }
        }
    }
    let mut invariant_violations = Vec::new();
    for hit in &mut hits {
        if !hit.replay(f)? {
            invariant_violations.push(format!("hit at alpha = {} does not replay", hit.alpha));
        }
        let v_like = hit.kind == RelationKind::V
            || (hit.kind == RelationKind::TildeV && hit.k == 0);
        if !v_like || hit.alpha.is_zero() {
            continue;
        }
        match constant_term_chain_holds(f, s, hit, options.bit_budget) {
            Ok(true) => {}
            Ok(false) => invariant_violations.push(format!(
                "constant-term chain fails at alpha = {}, n = {}",
                hit.alpha, hit.n
            )),
            Err(_) => warnings.push(format!(
                "constant-term chain not checked at alpha = {} (bit budget)",
                hit.alpha
            )),
        }
        if hit.witness.exponent >= 2 {
            if !alpha_in_r_sf(f, s, hit)? {
                invariant_violations.push(format!(
                    "alpha = {} is not an S_f-integer although l >= 2",
                    hit.alpha
                ));
            }
            if let Ok(reading) = conductor_reading(f, s, hit, options.eps) {
                if !(reading.chain_holds && reading.bound_holds) {
                    invariant_violations.push(format!(
                        "conductor inequalities fail at alpha = {}",
                        hit.alpha
                    ));
                }
                hit.diagnostics = Some(reading);
            }
        }
    }
    Ok(SearchReport {
        kind,
        polynomial: f.clone(),
        s: s.clone(),
        bound: b,
        params,
        counts: stabilization_counts(b, &hits),
        hits,
        visited: output.visited,
        skipped,
        zero_skips,
        depth_cap,
        warnings,
        invariant_violations,
    })
}

pub fn search_u(
    f: &Poly,
    s: &PrimeSet,
    b: u64,
    options: &ScanOptions,
) -> Result<SearchReport, SearchError> {
    if b == 0 {
        return Err(SearchError::InvalidBound);
    }
    let warnings = warn_on_preconditions(f, Hypothesis::U);
    let ctx = RelationContext::new(f.clone(), s.clone()).with_budget(options.bit_budget);
    let small = f.small_form();
    let s_list: Vec<u64> = s.iter().collect();
    let output = scan_pairs(b, options, |p, q| {
        if let Some((num, den)) = small.as_ref().and_then(|sf| sf.eval(p, q)) {
            if !may_be_power(num, den, &s_list) {
                return None;
            }
        }
        let alpha = Rational::new_raw(p.into(), q.into());
        match ctx.u_membership(&alpha) {
            Ok(Some(hit)) => Some(Outcome::Hit(hit)),
            Ok(None) => None,
            Err(_) => Some(Outcome::Skipped),
        }
    });
    finish_report(
        RelationKind::U,
        f,
        s,
        b,
        SearchParams { n_max: 1, k_max: 0 },
        output,
        options,
        warnings,
        None,
    )
}

/// Largest `n` whose iterates stay inside the bit budget for every point of
/// height at most `log b`, using `h(f^n(a)) <= d^n (h(a) + c1)`.
pub fn depth_limit(f: &Poly, b: u64, options: &ScanOptions) -> Result<u32, SearchError> {
    let bound = height_bounds(f)?;
    let budget_nats = options.bit_budget as f64 * std::f64::consts::LN_2 / 2.0;
    let base = (b as f64).ln() + bound.c1;
    let d = f.degree() as f64;
    let mut n = 0;
    while n < options.max_depth && d.powi(n as i32 + 1) * base <= budget_nats {
        n += 1;
    }
    Ok(n.max(1))
}

fn capped_depth(
    f: &Poly,
    b: u64,
    requested: u32,
    options: &ScanOptions,
    warnings: &mut Vec<String>,
) -> Result<(u32, Option<u32>), SearchError> {
    let limit = depth_limit(f, b, options)?;
    if requested > limit {
        warnings.push(format!(
            "iterate depth capped at {limit} (requested {requested}) by the height growth bound"
        ));
        Ok((limit, Some(limit)))
    } else {
        Ok((requested, None))
    }
}

/// V_m search; `alpha = 0` is excluded since the ratio is undefined there.
pub fn search_v(
    f: &Poly,
    s: &PrimeSet,
    b: u64,
    m: u32,
    options: &ScanOptions,
) -> Result<SearchReport, SearchError> {
    if b == 0 {
        return Err(SearchError::InvalidBound);
    }
    if m == 0 {
        return Err(SearchError::InvalidParameters("m must be at least 1".into()));
    }
    let mut warnings = warn_on_preconditions(f, Hypothesis::Vm(m));
    let (n_max, depth_cap) = capped_depth(f, b, m, options, &mut warnings)?;
    let ctx = RelationContext::new(f.clone(), s.clone()).with_budget(options.bit_budget);
    let output = scan_pairs(b, options, |p, q| {
        if p == 0 {
            return None;
        }
        let alpha = Rational::new_raw(p.into(), q.into());
        match ctx.v_membership(&alpha, n_max) {
            Ok(Some(hit)) => Some(Outcome::Hit(hit)),
            Ok(None) => None,
            Err(_) => Some(Outcome::Skipped),
        }
    });
    finish_report(
        RelationKind::V,
        f,
        s,
        b,
        SearchParams { n_max, k_max: 0 },
        output,
        options,
        warnings,
        depth_cap,
    )
}

pub fn search_tilde_v(
    f: &Poly,
    s: &PrimeSet,
    b: u64,
    n_max: u32,
    k_max: u32,
    options: &ScanOptions,
) -> Result<SearchReport, SearchError> {
    if b == 0 {
        return Err(SearchError::InvalidBound);
    }
    if n_max == 0 {
        return Err(SearchError::InvalidParameters("n_max must be at least 1".into()));
    }
    let mut warnings = warn_on_preconditions(f, Hypothesis::Abc);
    let (depth, depth_cap) = capped_depth(f, b, n_max + k_max, options, &mut warnings)?;
    let (n_max, k_max) = if depth_cap.is_some() {
        let k = k_max.min(depth.saturating_sub(1));
        (depth - k, k)
    } else {
        (n_max, k_max)
    };
    let ctx = RelationContext::new(f.clone(), s.clone()).with_budget(options.bit_budget);
    let output = scan_pairs(b, options, |p, q| {
        let alpha = Rational::new_raw(p.into(), q.into());
        match ctx.tilde_v_membership(&alpha, n_max, k_max) {
            Ok(out) => {
                let z = out.zero_k.len() as u64;
                match (out.hit, z) {
                    (Some(h), 0) => Some(Outcome::Hit(h)),
                    (Some(h), z) => Some(Outcome::HitWithZeroSkips(h, z)),
                    (None, 0) => None,
                    (None, z) => Some(Outcome::ZeroSkips(z)),
                }
            }
            Err(_) => Some(Outcome::Skipped),
        }
    });
    finish_report(
        RelationKind::TildeV,
        f,
        s,
        b,
        SearchParams { n_max, k_max },
        output,
        options,
        warnings,
        depth_cap,
    )
}

/// For a relation `f^(n)(alpha) = a^l alpha` with `l >= 2`, `alpha` has no
/// denominator outside `S_f`.
pub fn alpha_in_r_sf(f: &Poly, s: &PrimeSet, hit: &RelationHit) -> Result<bool, SearchError> {
    Ok(is_s_integer(&hit.alpha, &s_f(f, s)?))
}

/// At every prime `p` outside `S_f` with `v_p(alpha) > 0` and
/// `v_p(f^(n)(alpha)) > 0`, also `v_p(f^(n)(0)) > 0`.
pub fn constant_term_chain_holds(
    f: &Poly,
    s: &PrimeSet,
    hit: &RelationHit,
    bit_budget: u64,
) -> Result<bool, SearchError> {
    let sf = s_f(f, s)?;
    let n = hit.n as usize;
    let value = iterate_eval_budget(f, &hit.alpha, n, bit_budget)?;
    let mut zero_iterate = None;
    for (p, _) in Factorizer::default().factor_uint(hit.alpha.numer().magnitude()) {
        if sf.contains_big(&p) {
            continue;
        }
        let divides = |x: &Rational| x.is_zero() || (x.numer().magnitude() % &p).is_zero();
        if !divides(&value) {
            continue;
        }
        if zero_iterate.is_none() {
            zero_iterate = Some(iterate_eval_budget(f, &Rational::zero(), n, bit_budget)?);
        }
        if !divides(zero_iterate.as_ref().expect("just computed")) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Solution of `r^2 - 2 s^2 = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PellPair {
    #[serde(serialize_with = "serialize_display")]
    pub r: BigUint,
    #[serde(serialize_with = "serialize_display")]
    pub s: BigUint,
}

fn serialize_display<S: serde::Serializer>(x: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(x)
}

impl PellPair {
    pub fn is_solution(&self) -> bool {
        &self.r * &self.r == BigUint::from(2u32) * &self.s * &self.s + 1u32
    }
}

/// The first `count` solutions after the trivial one, from `(3, 2)` via
/// `(r, s) -> (3r + 4s, 2r + 3s)`.
pub fn pell_pairs(count: usize) -> Vec<PellPair> {
    let mut out = Vec::with_capacity(count);
    let mut r = BigUint::from(3u32);
    let mut s = BigUint::from(2u32);
    for _ in 0..count {
        out.push(PellPair {
            r: r.clone(),
            s: s.clone(),
        });
        let next_r = 3u32 * &r + 4u32 * &s;
        let next_s = 2u32 * &r + 3u32 * &s;
        r = next_r;
        s = next_s;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PellVariant {
    /// `f = 2 g(X)^2 (X^2 - 1)` with `f(r) = (2 g(r) s)^2`
    U,
    /// `f = 2 X (X^2 - 1)` with `f(r) / r = (2 s)^2`
    V,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PellMember {
    pub pair: PellPair,
    pub polynomial: Poly,
    pub hit: RelationHit,
    pub verified: bool,
}

pub fn pell_polynomial(g: Option<&Poly>, variant: PellVariant) -> Poly {
    let two = Rational::from_integer(2.into());
    let x2_minus_1: Poly = Poly::from_ints(&[-1, 0, 1]).expect("X^2 - 1");
    match variant {
        PellVariant::U => {
            let g = g.cloned().unwrap_or_else(|| Poly::from_ints(&[1]).expect("1"));
            g.mul(&g).mul(&x2_minus_1).scale(&two).expect("nonzero")
        }
        PellVariant::V => Poly::x().mul(&x2_minus_1).scale(&two).expect("nonzero"),
    }
}

/// Infinite families of relations built from Pell solutions; each hit is
/// replayed exactly before it is returned.
pub fn pell_family(
    count: usize,
    g: Option<&Poly>,
    variant: PellVariant,
) -> Result<Vec<PellMember>, SearchError> {
    let f = pell_polynomial(g, variant);
    let ctx = RelationContext::new(f.clone(), PrimeSet::empty());
    let mut out = Vec::with_capacity(count);
    for pair in pell_pairs(count) {
        let r = Rational::from_integer(BigInt::from(pair.r.clone()));
        let s = Rational::from_integer(BigInt::from(pair.s.clone()));
        let two = Rational::from_integer(2.into());
        let (kind, base, value) = match variant {
            PellVariant::U => {
                let g_at_r = g.map_or_else(Rational::one, |g| g.eval(&r));
                let base = num_traits::abs(two * g_at_r * &s);
                (RelationKind::U, base, f.eval(&r))
            }
            PellVariant::V => (RelationKind::V, two * &s, f.eval(&r) / &r),
        };
        let hit = RelationHit {
            kind,
            alpha: r.clone(),
            n: 1,
            k: 0,
            witness: PowerWitness {
                exponent: 2,
                base,
            },
            trivial: crate::powerrel::is_trivial_value(&value),
            preperiodic: ctx.is_preperiodic(&r)?,
            diagnostics: None,
        };
        let verified = pair.is_solution() && hit.replay(&f)?;
        out.push(PellMember {
            pair,
            polynomial: f.clone(),
            hit,
            verified,
        });
    }
    Ok(out)
}

/// `v_p(f^(n)(alpha)) = d^n v_p(alpha)` at a prime of good reduction with
/// `v_p(alpha) < 0`; returns the two sides.
pub fn valuation_growth(
    f: &Poly,
    p: u64,
    alpha: &Rational,
    n: usize,
) -> Result<(i64, i64), DynamicsError> {
    let value = crate::dynamics::iterate_eval(f, alpha, n)?;
    let lhs = valuation(&value, p).finite().unwrap_or(i64::MAX);
    let rhs = (f.degree() as i64).pow(n as u32)
        * valuation(alpha, p).finite().unwrap_or(i64::MAX);
    Ok((lhs, rhs))
}
