//! Dense univariate polynomials with rational coefficients.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::exactnum::{parse_rational, Rational};

/// `c_0 + c_1 X + ... + c_d X^d` with `c_d != 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Poly {
    coeffs: Vec<Rational>,
}

impl Poly {
    /// Builds a polynomial from `c_0..c_d`; trailing zeros are dropped.
    pub fn new(mut coeffs: Vec<Rational>) -> Result<Self, DynamicsError> {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            return Err(DynamicsError::ZeroPolynomial);
        }
        Ok(Self { coeffs })
    }

    pub fn from_ints(coeffs: &[i64]) -> Result<Self, DynamicsError> {
        Self::new(coeffs.iter().map(|&c| Rational::from_integer(c.into())).collect())
    }

    pub fn constant(c: Rational) -> Result<Self, DynamicsError> {
        Self::new(vec![c])
    }

    /// `c X^k`
    pub fn monomial(c: Rational, k: usize) -> Result<Self, DynamicsError> {
        let mut coeffs = vec![Rational::zero(); k + 1];
        coeffs[k] = c;
        Self::new(coeffs)
    }

    pub fn x() -> Self {
        Self::monomial(Rational::one(), 1).expect("X is nonzero")
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> Rational {
        self.coeffs.get(i).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn leading(&self) -> &Rational {
        self.coeffs.last().expect("nonzero polynomial")
    }

    pub fn constant_term(&self) -> &Rational {
        &self.coeffs[0]
    }

    /// Exact value at `alpha`, computed from the integer homogeneous form.
    pub fn eval(&self, alpha: &Rational) -> Rational {
        let form = self.integer_form();
        let x = alpha.numer();
        let y = alpha.denom();
        let d = self.degree();
        let mut ypow = Vec::with_capacity(d + 1);
        ypow.push(BigInt::one());
        for i in 1..=d {
            let next = &ypow[i - 1] * y;
            ypow.push(next);
        }
        let mut acc = form.coeffs[d].clone();
        for i in (0..d).rev() {
            acc = acc * x;
            if !form.coeffs[i].is_zero() {
                acc += &form.coeffs[i] * &ypow[d - i];
            }
        }
        let scale = BigInt::from(form.scale);
        let den = &scale * &ypow[d];
        if acc.is_zero() {
            return Rational::zero();
        }
        // For coprime x, y the common factor of numerator and denominator
        // divides K = D a_d^d, so the gcd never touches the full operands.
        let k = scale * num_traits::pow(form.coeffs[d].abs(), d);
        let g = (&acc % &k).gcd(&k).gcd(&(&den % &k));
        if g.is_one() {
            Rational::new_raw(acc, den)
        } else {
            Rational::new_raw(acc / &g, den / g)
        }
    }

    pub fn derivative(&self) -> Option<Poly> {
        if self.degree() == 0 {
            return None;
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| c * Rational::from_integer(BigInt::from(i)))
            .collect();
        Poly::new(coeffs).ok()
    }

    pub fn add(&self, other: &Poly) -> Option<Poly> {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n).map(|i| self.coeff(i) + other.coeff(i)).collect();
        Poly::new(coeffs).ok()
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        Poly {
            coeffs: mul_coeffs(&self.coeffs, &other.coeffs),
        }
    }

    pub fn scale(&self, c: &Rational) -> Option<Poly> {
        Poly::new(self.coeffs.iter().map(|a| a * c).collect()).ok()
    }

    /// `self - beta` as a polynomial; `None` if it vanishes identically.
    pub fn shift_constant(&self, beta: &Rational) -> Option<Poly> {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] -= beta;
        Poly::new(coeffs).ok()
    }

    /// `self(inner(X))` by Horner; `None` only if the result vanishes.
    pub fn compose(&self, inner: &Poly) -> Option<Poly> {
        let mut acc = vec![self.leading().clone()];
        for c in self.coeffs.iter().rev().skip(1) {
            acc = mul_coeffs(&acc, &inner.coeffs);
            acc[0] += c;
        }
        Poly::new(acc).ok()
    }

    /// `f^{(m)}` expanded symbolically. Coefficient growth is doubly
    /// exponential; only meant for small `m`.
    pub fn iterate_poly(&self, m: usize) -> Poly {
        let mut acc = Poly::x();
        for _ in 0..m {
            acc = self
                .compose(&acc)
                .expect("iterate of a nonconstant polynomial is nonconstant");
        }
        acc
    }

    /// Integer coefficients `a_i = D c_i` with `D` the least common
    /// denominator, so that `f(x/y) = (sum a_i x^i y^(d-i)) / (D y^d)`.
    pub fn integer_form(&self) -> IntegerForm {
        let scale = self
            .coeffs
            .iter()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| (c * Rational::from_integer(scale.clone())).to_integer())
            .collect();
        IntegerForm {
            coeffs,
            scale: scale.magnitude().clone(),
        }
    }

    /// Word-sized copy of [`Poly::integer_form`] for hot loops, if it fits.
    pub fn small_form(&self) -> Option<SmallForm> {
        let form = self.integer_form();
        let coeffs = form
            .coeffs
            .iter()
            .map(ToPrimitive::to_i128)
            .collect::<Option<Vec<_>>>()?;
        Some(SmallForm {
            coeffs,
            scale: form.scale.to_i128()?,
        })
    }
}

fn mul_coeffs(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    let mut out = vec![Rational::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerForm {
    pub coeffs: Vec<BigInt>,
    pub scale: BigUint,
}

/// i128 homogeneous evaluator; every operation is overflow-checked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmallForm {
    pub coeffs: Vec<i128>,
    pub scale: i128,
}

impl SmallForm {
    /// `f(x/y)` as a reduced `(num, den)` with `den > 0`, or `None` on overflow.
    pub fn eval(&self, x: i64, y: i64) -> Option<(i128, i128)> {
        debug_assert!(y > 0);
        let d = self.coeffs.len() - 1;
        let (x, y) = (x as i128, y as i128);
        let mut acc = self.coeffs[d];
        let mut ypow: i128 = 1;
        for i in (0..d).rev() {
            ypow = ypow.checked_mul(y)?;
            acc = acc.checked_mul(x)?;
            if self.coeffs[i] != 0 {
                acc = acc.checked_add(self.coeffs[i].checked_mul(ypow)?)?;
            }
        }
        let den = self.scale.checked_mul(ypow)?;
        let (a, b) = (acc.unsigned_abs(), den.unsigned_abs());
        let g = match (u64::try_from(a), u64::try_from(b)) {
            (Ok(a), Ok(b)) => a.gcd(&b) as i128,
            _ => a.gcd(&b) as i128,
        };
        Some((acc / g, den / g))
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let neg = c.is_negative();
            let mag = c.abs();
            if first {
                if neg {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            first = false;
            let mag_str = if mag.is_integer() {
                mag.to_string()
            } else {
                format!("({mag})")
            };
            match i {
                0 => f.write_str(&mag_str)?,
                _ => {
                    if !mag.is_one() {
                        f.write_str(&mag_str)?;
                        f.write_str("*")?;
                    }
                    f.write_str("X")?;
                    if i > 1 {
                        write!(f, "^{i}")?;
                    }
                }
            }
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}

impl FromStr for Poly {
    type Err = DynamicsError;

    /// Accepts `"c0,c1,...,cd"` or a symbolic ASCII string such as
    /// `"X^3-X^2+1"`, `"(1/6)X^3+5"` or `"2*x^2 - 1/3 x"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.contains(',') || !s.chars().any(|c| c == 'x' || c == 'X') {
            let coeffs = s
                .split(',')
                .map(|c| parse_rational(c).map_err(|_| parse_err(s)))
                .collect::<Result<Vec<_>, _>>()?;
            return Poly::new(coeffs);
        }
        parse_symbolic(s)
    }
}

fn parse_err(s: &str) -> DynamicsError {
    DynamicsError::Parse(format!("cannot parse polynomial {s:?}"))
}

fn parse_symbolic(s: &str) -> Result<Poly, DynamicsError> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let mut terms: Vec<(bool, String)> = Vec::new();
    let mut current = String::new();
    let mut negative = false;
    let mut depth = 0;
    for ch in compact.chars() {
        match ch {
            '(' => {
                depth += 1;
                current.push(ch);
            }
            ')' => {
                depth -= 1;
                current.push(ch);
            }
            '+' | '-' if depth == 0 && !current.ends_with('^') => {
                if !current.is_empty() {
                    terms.push((negative, std::mem::take(&mut current)));
                } else if ch == '-' && negative {
                    return Err(parse_err(s));
                }
                negative = ch == '-';
            }
            _ => current.push(ch),
        }
    }
    if current.is_empty() {
        return Err(parse_err(s));
    }
    terms.push((negative, current));

    let mut coeffs: Vec<Rational> = Vec::new();
    for (neg, term) in terms {
        let (coeff, exp) = parse_term(&term).ok_or_else(|| parse_err(s))?;
        if coeffs.len() <= exp {
            coeffs.resize(exp + 1, Rational::zero());
        }
        if neg {
            coeffs[exp] -= coeff;
        } else {
            coeffs[exp] += coeff;
        }
    }
    Poly::new(coeffs)
}

fn parse_term(term: &str) -> Option<(Rational, usize)> {
    let pos = term.find(['x', 'X']);
    let (coeff_part, exp) = match pos {
        None => (term, 0),
        Some(i) => {
            let rest = &term[i + 1..];
            let exp = if rest.is_empty() {
                1
            } else {
                rest.strip_prefix('^')?.parse().ok()?
            };
            (&term[..i], exp)
        }
    };
    let coeff_part = coeff_part.trim_end_matches('*');
    let coeff_part = coeff_part
        .strip_prefix('(')
        .and_then(|c| c.strip_suffix(')'))
        .unwrap_or(coeff_part);
    let coeff = if coeff_part.is_empty() {
        Rational::one()
    } else {
        parse_rational(coeff_part).ok()?
    };
    Some((coeff, exp))
}

impl Serialize for Poly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Poly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
