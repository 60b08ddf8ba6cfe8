//! Exact rationals, factorization, p-adic valuations and S-integer predicates.
//!
//! Rationals are [`num_rational::BigRational`], which keeps every value in
//! lowest terms with a positive denominator and represents zero as `0/1`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = BigRational;

/// Default trial-division bound used before switching to Pollard rho.
pub const DEFAULT_TRIAL_BOUND: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExactError {
    #[error("operation is undefined at zero")]
    ZeroInput,
    #[error("{0} is not a prime")]
    NotPrime(u64),
    #[error("cannot parse {input:?} as {what}")]
    Parse { input: String, what: &'static str },
}

/// p-adic valuation; `v_p(0)` is [`Valuation::Infinite`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Valuation {
    Finite(i64),
    Infinite,
}

impl Valuation {
    pub fn finite(self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::Infinite => None,
        }
    }

    pub fn is_positive(self) -> bool {
        match self {
            Valuation::Finite(v) => v > 0,
            Valuation::Infinite => true,
        }
    }

    pub fn is_negative(self) -> bool {
        matches!(self, Valuation::Finite(v) if v < 0)
    }
}

impl PartialOrd for Valuation {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Valuation {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Valuation::Finite(a), Valuation::Finite(b)) => a.cmp(b),
            (Valuation::Finite(_), Valuation::Infinite) => Ordering::Less,
            (Valuation::Infinite, Valuation::Finite(_)) => Ordering::Greater,
            (Valuation::Infinite, Valuation::Infinite) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Valuation::Finite(v) => write!(f, "{v}"),
            Valuation::Infinite => f.write_str("inf"),
        }
    }
}

/// Finite set of rational primes, kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrimeSet {
    primes: BTreeSet<u64>,
}

impl PrimeSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new<I: IntoIterator<Item = u64>>(primes: I) -> Result<Self, ExactError> {
        let mut set = BTreeSet::new();
        for p in primes {
            if !is_prime_u64(p) {
                return Err(ExactError::NotPrime(p));
            }
            set.insert(p);
        }
        Ok(Self { primes: set })
    }

    pub fn contains(&self, p: u64) -> bool {
        self.primes.contains(&p)
    }

    /// Membership for a prime that may not fit in a machine word.
    pub fn contains_big(&self, p: &BigUint) -> bool {
        p.to_u64().is_some_and(|p| self.contains(p))
    }

    pub fn insert(&mut self, p: u64) -> Result<(), ExactError> {
        if !is_prime_u64(p) {
            return Err(ExactError::NotPrime(p));
        }
        self.primes.insert(p);
        Ok(())
    }

    pub fn union(&self, other: &PrimeSet) -> PrimeSet {
        PrimeSet {
            primes: self.primes.union(&other.primes).copied().collect(),
        }
    }

    pub fn is_subset(&self, other: &PrimeSet) -> bool {
        self.primes.is_subset(&other.primes)
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.primes.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }
}

impl fmt::Display for PrimeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.primes.iter().map(u64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for PrimeSet {
    type Err = ExactError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().trim_start_matches('{').trim_end_matches('}').trim();
        if s.is_empty() {
            return Ok(PrimeSet::empty());
        }
        let mut primes = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            let p: u64 = part.parse().map_err(|_| ExactError::Parse {
                input: part.to_string(),
                what: "prime",
            })?;
            primes.push(p);
        }
        PrimeSet::new(primes)
    }
}

impl FromIterator<u64> for PrimeSet {
    /// Panics on non-primes; use [`PrimeSet::new`] for untrusted input.
    fn from_iter<T: IntoIterator<Item = u64>>(iter: T) -> Self {
        PrimeSet::new(iter).expect("PrimeSet::from_iter given a non-prime")
    }
}

impl serde::Serialize for PrimeSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.primes.iter())
    }
}

impl<'de> serde::Deserialize<'de> for PrimeSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let primes = Vec::<u64>::deserialize(d)?;
        PrimeSet::new(primes).map_err(serde::de::Error::custom)
    }
}

/// Sign and prime-exponent map of a nonzero rational.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactoredRational {
    pub sign: i8,
    pub factors: BTreeMap<BigUint, i64>,
}

impl FactoredRational {
    pub fn reassemble(&self) -> Rational {
        let mut num = BigUint::one();
        let mut den = BigUint::one();
        for (p, &e) in &self.factors {
            let pow = p.pow(e.unsigned_abs() as u32);
            if e > 0 {
                num *= pow;
            } else {
                den *= pow;
            }
        }
        let sign = match self.sign.cmp(&0) {
            Ordering::Less => Sign::Minus,
            Ordering::Equal => Sign::NoSign,
            Ordering::Greater => Sign::Plus,
        };
        Rational::new(BigInt::from_biguint(sign, num), BigInt::from(den))
    }
}

pub fn parse_rational(s: &str) -> Result<Rational, ExactError> {
    let err = || ExactError::Parse {
        input: s.to_string(),
        what: "rational",
    };
    let t = s.trim();
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (t, "1"),
    };
    let num: BigInt = num.parse().map_err(|_| err())?;
    let den: BigInt = den.parse().map_err(|_| err())?;
    if den.is_zero() {
        return Err(err());
    }
    Ok(Rational::new(num, den))
}

/// `"p/q"` or `"p"` when the denominator is 1.
pub fn format_rational(r: &Rational) -> String {
    r.to_string()
}

fn int_valuation(n: &BigUint, p: u64) -> i64 {
    if n.is_zero() {
        return 0;
    }
    let mut n = n.clone();
    let mut v = 0;
    loop {
        let (q, r) = n.div_rem(&BigUint::from(p));
        if !r.is_zero() {
            return v;
        }
        n = q;
        v += 1;
    }
}

pub fn valuation(alpha: &Rational, p: u64) -> Valuation {
    if alpha.is_zero() {
        return Valuation::Infinite;
    }
    let num = alpha.numer().magnitude();
    let den = alpha.denom().magnitude();
    Valuation::Finite(int_valuation(num, p) - int_valuation(den, p))
}

/// Removes every factor of every prime in `s` from `n`.
pub fn strip_primes(n: &BigUint, s: &PrimeSet) -> BigUint {
    let mut n = n.clone();
    if n.is_zero() {
        return n;
    }
    for p in s.iter() {
        let p = BigUint::from(p);
        loop {
            let (q, r) = n.div_rem(&p);
            if !r.is_zero() {
                break;
            }
            n = q;
        }
    }
    n
}

pub fn is_s_integer(alpha: &Rational, s: &PrimeSet) -> bool {
    strip_primes(alpha.denom().magnitude(), s).is_one()
}

pub fn is_s_unit(alpha: &Rational, s: &PrimeSet) -> bool {
    !alpha.is_zero()
        && strip_primes(alpha.numer().magnitude(), s).is_one()
        && strip_primes(alpha.denom().magnitude(), s).is_one()
}

pub fn factor(alpha: &Rational) -> Result<FactoredRational, ExactError> {
    Factorizer::default().factor_rational(alpha)
}

/// Sum of `log p` over primes outside `s` where `v_p(alpha) > 0`
/// (or `!= 0` when `positive_only` is false).
pub fn radical_log_outside(
    alpha: &Rational,
    s: &PrimeSet,
    positive_only: bool,
) -> Result<f64, ExactError> {
    if alpha.is_zero() {
        return Err(ExactError::ZeroInput);
    }
    let fz = Factorizer::default();
    let mut primes: Vec<BigUint> = fz
        .factor_uint(&strip_primes(alpha.numer().magnitude(), s))
        .into_keys()
        .collect();
    if !positive_only {
        primes.extend(
            fz.factor_uint(&strip_primes(alpha.denom().magnitude(), s))
                .into_keys(),
        );
    }
    Ok(primes.iter().map(ln_big).fold(0.0, |acc, x| acc + x))
}

/// Natural log of a positive integer, accurate to double precision.
pub fn ln_big(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    if bits <= 1000 {
        if let Some(f) = n.to_f64() {
            return f.ln();
        }
    }
    let shift = bits - 64;
    let top = (n >> shift).to_u64().unwrap_or(u64::MAX) as f64;
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Trial division up to a bound, then Miller-Rabin and Pollard-Brent rho.
#[derive(Debug, Clone, Copy)]
pub struct Factorizer {
    pub trial_bound: u64,
}

impl Default for Factorizer {
    fn default() -> Self {
        Self {
            trial_bound: DEFAULT_TRIAL_BOUND,
        }
    }
}

impl Factorizer {
    pub fn factor_rational(&self, alpha: &Rational) -> Result<FactoredRational, ExactError> {
        if alpha.is_zero() {
            return Err(ExactError::ZeroInput);
        }
        let mut factors = self.factor_uint(alpha.numer().magnitude());
        for (p, e) in self.factor_uint(alpha.denom().magnitude()) {
            *factors.entry(p).or_insert(0) -= e;
        }
        factors.retain(|_, e| *e != 0);
        let sign = if alpha.is_negative() { -1 } else { 1 };
        Ok(FactoredRational { sign, factors })
    }

    /// Prime factorization of a positive integer; `{}` for 0 and 1.
    pub fn factor_uint(&self, n: &BigUint) -> BTreeMap<BigUint, i64> {
        let mut out = BTreeMap::new();
        if n.is_zero() || n.is_one() {
            return out;
        }
        let mut n = n.clone();
        for &p in small_primes(self.trial_bound) {
            if n.is_one() {
                break;
            }
            let pb = BigUint::from(p);
            if &pb * &pb > n {
                break;
            }
            let mut e = 0;
            while (&n % p).is_zero() {
                n /= p;
                e += 1;
            }
            if e > 0 {
                out.insert(pb, e);
            }
        }
        if !n.is_one() {
            let bound = BigUint::from(self.trial_bound);
            if n <= &bound * &bound {
                *out.entry(n).or_insert(0) += 1;
            } else {
                let mut stack = vec![n];
                while let Some(m) = stack.pop() {
                    if m.is_one() {
                        continue;
                    }
                    if is_probable_prime(&m) {
                        *out.entry(m).or_insert(0) += 1;
                        continue;
                    }
                    let d = pollard_brent(&m);
                    let q = &m / &d;
                    stack.push(d);
                    stack.push(q);
                }
            }
        }
        out
    }
}

fn small_primes(bound: u64) -> &'static [u64] {
    static TABLE: OnceLock<Vec<u64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let limit = DEFAULT_TRIAL_BOUND.max(1000) as usize;
        let mut composite = vec![false; limit + 1];
        let mut primes = Vec::new();
        for i in 2..=limit {
            if !composite[i] {
                primes.push(i as u64);
                let mut j = i * i;
                while j <= limit {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        primes
    });
    let end = table.partition_point(|&p| p <= bound);
    &table[..end]
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod_u64(r, b, m);
        }
        b = mul_mod_u64(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for 64-bit inputs.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'outer: for a in BASES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Miller-Rabin with the first 20 prime bases; deterministic below 2^64 and
/// far beyond (no known counterexample below 3.3e24 for the first 12 bases).
pub fn is_probable_prime(n: &BigUint) -> bool {
    if let Some(small) = n.to_u64() {
        return is_prime_u64(small);
    }
    if n.is_even() {
        return false;
    }
    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    const BASES: [u32; 20] = [
        2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
    ];
    'outer: for a in BASES {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Returns a nontrivial divisor of an odd composite `n`.
fn pollard_brent(n: &BigUint) -> BigUint {
    if n.is_even() {
        return BigUint::from(2u32);
    }
    if let Some(small) = n.to_u64() {
        return BigUint::from(pollard_brent_u64(small));
    }
    let one = BigUint::one();
    let mut c = BigUint::one();
    loop {
        let f = |x: &BigUint| (x * x + &c) % n;
        let mut y = BigUint::from(2u32);
        let mut r: u64 = 1;
        let mut q = BigUint::one();
        let mut g = BigUint::one();
        let mut x = y.clone();
        let mut ys = y.clone();
        const M: u64 = 128;
        while g.is_one() {
            x = y.clone();
            for _ in 0..r {
                y = f(&y);
            }
            let mut k = 0;
            while k < r && g.is_one() {
                ys = y.clone();
                for _ in 0..M.min(r - k) {
                    y = f(&y);
                    let diff = if x > y { &x - &y } else { &y - &x };
                    q = (q * diff) % n;
                }
                g = q.gcd(n);
                k += M;
            }
            r *= 2;
        }
        if &g == n {
            loop {
                ys = f(&ys);
                let diff = if x > ys { &x - &ys } else { &ys - &x };
                g = diff.gcd(n);
                if g != one {
                    break;
                }
            }
        }
        if &g != n {
            return g;
        }
        c += 1u32;
    }
}

fn pollard_brent_u64(n: u64) -> u64 {
    if n % 2 == 0 {
        return 2;
    }
    let mut c = 1u64;
    loop {
        let f = |x: u64| (mul_mod_u64(x, x, n) + c) % n;
        let mut y = 2u64;
        let mut r = 1u64;
        let mut q = 1u64;
        let mut g = 1u64;
        let mut x = y;
        let mut ys = y;
        const M: u64 = 128;
        while g == 1 {
            x = y;
            for _ in 0..r {
                y = f(y);
            }
            let mut k = 0;
            while k < r && g == 1 {
                ys = y;
                for _ in 0..M.min(r - k) {
                    y = f(y);
                    q = mul_mod_u64(q, x.abs_diff(y), n);
                }
                g = q.gcd(&n);
                k += M;
            }
            r *= 2;
        }
        if g == n {
            loop {
                ys = f(ys);
                g = x.abs_diff(ys).gcd(&n);
                if g != 1 {
                    break;
                }
            }
        }
        if g != n {
            return g;
        }
        c += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    fn set(ps: &[u64]) -> PrimeSet {
        PrimeSet::new(ps.iter().copied()).unwrap()
    }

    #[test]
    fn valuation_examples() {
        assert_eq!(valuation(&q("48"), 2), Valuation::Finite(4));
        assert_eq!(valuation(&q("3/8"), 2), Valuation::Finite(-3));
        assert_eq!(valuation(&q("0"), 7), Valuation::Infinite);
        assert!(Valuation::Infinite > Valuation::Finite(i64::MAX));
    }

    #[test]
    fn factor_examples() {
        let f = factor(&q("48")).unwrap();
        assert_eq!(f.sign, 1);
        assert_eq!(
            f.factors,
            BTreeMap::from([(BigUint::from(2u32), 4), (BigUint::from(3u32), 1)])
        );
        let f = factor(&q("-7/9")).unwrap();
        assert_eq!(f.sign, -1);
        assert_eq!(
            f.factors,
            BTreeMap::from([(BigUint::from(7u32), 1), (BigUint::from(3u32), -2)])
        );
        let f = factor(&q("1")).unwrap();
        assert_eq!((f.sign, f.factors.len()), (1, 0));
        assert_eq!(factor(&q("0")), Err(ExactError::ZeroInput));
    }

    #[test]
    fn factor_large_semiprime() {
        // two primes above the trial bound
        let p = BigUint::from(1_000_003u64);
        let r = BigUint::from(998_244_353u64);
        let n = &p * &r * &r;
        let f = Factorizer::default().factor_uint(&n);
        assert_eq!(f, BTreeMap::from([(p, 1), (r, 2)]));

        let a = BigUint::from(18_446_744_073_709_551_557u64); // largest prime < 2^64
        let b = BigUint::from(4_294_967_311u64);
        let f = Factorizer::default().factor_uint(&(&a * &b));
        assert_eq!(f, BTreeMap::from([(a, 1), (b, 1)]));
    }

    #[test]
    fn s_integer_examples() {
        assert!(is_s_integer(&q("3/8"), &set(&[2])));
        assert!(!is_s_integer(&q("3/8"), &set(&[3])));
        assert!(is_s_integer(&q("5"), &PrimeSet::empty()));
        assert!(is_s_integer(&q("0"), &PrimeSet::empty()));
    }

    #[test]
    fn s_unit_examples() {
        assert!(is_s_unit(&q("-4/9"), &set(&[2, 3])));
        assert!(!is_s_unit(&q("6"), &set(&[2])));
        assert!(is_s_unit(&q("1"), &PrimeSet::empty()));
        assert!(!is_s_unit(&q("0"), &set(&[2])));
    }

    #[test]
    fn radical_examples() {
        let r = radical_log_outside(&q("48"), &set(&[2]), true).unwrap();
        assert!((r - 3f64.ln()).abs() < 1e-15);
        let r = radical_log_outside(&q("49"), &PrimeSet::empty(), true).unwrap();
        assert!((r - 7f64.ln()).abs() < 1e-15);
        assert_eq!(radical_log_outside(&q("1"), &PrimeSet::empty(), true), Ok(0.0));
        let r = radical_log_outside(&q("10/21"), &PrimeSet::empty(), false).unwrap();
        assert!((r - 210f64.ln()).abs() < 1e-12);
        assert!(radical_log_outside(&q("0"), &PrimeSet::empty(), true).is_err());
    }

    #[test]
    fn prime_set_parsing() {
        let s: PrimeSet = "2,3,7".parse().unwrap();
        assert_eq!(s, set(&[2, 3, 7]));
        assert_eq!(s.to_string(), "2,3,7");
        assert_eq!("".parse::<PrimeSet>().unwrap(), PrimeSet::empty());
        assert_eq!("{}".parse::<PrimeSet>().unwrap(), PrimeSet::empty());
        assert_eq!("2,4".parse::<PrimeSet>(), Err(ExactError::NotPrime(4)));
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(format_rational(&q("6/-4")), "-3/2");
        assert_eq!(format_rational(&q(" 12 ")), "12");
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn big_log() {
        let n = BigUint::from(3u32).pow(1000);
        assert!((ln_big(&n) - 1000.0 * 3f64.ln()).abs() < 1e-9);
        assert_eq!(ln_big(&BigUint::one()), 0.0);
    }
}
