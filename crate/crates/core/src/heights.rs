//! Weil heights over Q, explicit one-step height constants for polynomial
//! maps, and canonical heights with a certified error.

use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::dynamics::{resultant_formal_int, DynamicsError, Poly};
use crate::exactnum::{ln_big, Rational};

/// Slack added to every floating-point height comparison that is claimed
/// as certified.
pub const CERT_SLACK: f64 = 1e-12;

/// Default bit budget for canonical height iterations, larger than the
/// orbit budget because tight tolerances need deep iterates.
pub const CANONICAL_BIT_BUDGET: u64 = 1 << 23;

pub fn log_plus(t: f64) -> f64 {
    t.max(1.0).ln()
}

/// `h(p/q) = log max(|p|, q)`; `h(0) = 0`.
pub fn naive_height(alpha: &Rational) -> f64 {
    if alpha.is_zero() {
        return 0.0;
    }
    let num = alpha.numer().magnitude();
    let den = alpha.denom().magnitude();
    ln_big(num.max(den))
}

/// Constants with `d h(b) - c_low <= h(f(b)) <= d h(b) + c_up` for all
/// rational `b`, and `c1 = max(c_up, c_low)` which works for every iterate:
/// `|h(f^k(b)) - d^k h(b)| <= d^k c1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightBound {
    pub degree: usize,
    pub c_up: f64,
    pub c_low: f64,
    pub c1: f64,
}

impl HeightBound {
    /// Above this height the orbit height strictly increases forever.
    pub fn escape_threshold(&self) -> f64 {
        let d = self.degree as f64;
        d * self.c_low / (d - 1.0) + 1e-9
    }

    /// Tail bound `max(c_up, c_low) / ((d - 1) d^n)` for `h(f^n(a)) / d^n`.
    pub fn telescoping_error(&self, n: u32) -> f64 {
        let d = self.degree as f64;
        self.c1 / ((d - 1.0) * d.powi(n as i32))
    }
}

/// Computes the one-step constants from the integer homogeneous form
/// `G(x, y) = sum a_i x^i y^(d-i)` and its companion `D y^d`.
///
/// Upper: `|G|, D|y|^d <= max(sum |a_i|, D) max(|x|,|y|)^d`.
/// Lower: for any `t` in (0, 1], either `|y| >= t|x|` and `D|y|^d >= D t^d M^d`,
/// or `|G| >= (|a_d| - sum_{i<d} |a_i| t^(d-i)) M^d`; the common factor of
/// `G` and `D y^d` divides `Res(G, D y^d)` because `gcd(x, y) = 1`.
pub fn height_bounds(f: &Poly) -> Result<HeightBound, DynamicsError> {
    let d = f.degree();
    if d < 2 {
        return Err(DynamicsError::DegreeTooSmall { degree: d, min: 2 });
    }
    let form = f.integer_form();
    let abs: Vec<f64> = form
        .coeffs
        .iter()
        .map(|c| c.magnitude().to_f64().unwrap_or(f64::INFINITY))
        .collect();
    let scale = form.scale.to_f64().unwrap_or(f64::INFINITY);
    let coeff_sum: f64 = abs.iter().sum();
    let c_up = coeff_sum.max(scale).ln().max(0.0);

    let lead = abs[d];
    let tail = |t: f64| -> f64 {
        lead - (0..d)
            .map(|i| abs[i] * t.powi((d - i) as i32))
            .sum::<f64>()
    };
    let rising = |t: f64| scale * t.powi(d as i32);
    let margin = if tail(1.0) >= rising(1.0) {
        rising(1.0).min(tail(1.0))
    } else {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rising(mid) <= tail(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // shave off bisection and rounding error
        rising(lo).min(tail(lo)) * (1.0 - 1e-12)
    };

    let companion = vec![num_bigint::BigInt::from(form.scale.clone())];
    let res = resultant_formal_int(&form.coeffs, d, &companion, d);
    let c_low = (ln_big(res.magnitude()) - margin.ln()).max(0.0);
    Ok(HeightBound {
        degree: d,
        c_up,
        c_low,
        c1: c_up.max(c_low),
    })
}

/// Canonical height estimate; the true value lies in `value +- error`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightEstimate {
    pub value: f64,
    pub error: f64,
    pub iterations: u32,
}

pub fn canonical_height(
    f: &Poly,
    alpha: &Rational,
    tol: f64,
) -> Result<HeightEstimate, DynamicsError> {
    canonical_height_with_budget(f, alpha, tol, CANONICAL_BIT_BUDGET)
}

/// Iterates until the telescoping tail drops below `tol`. A repeated orbit
/// value proves preperiodicity and returns exactly zero.
pub fn canonical_height_with_budget(
    f: &Poly,
    alpha: &Rational,
    tol: f64,
    bit_budget: u64,
) -> Result<HeightEstimate, DynamicsError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let bound = height_bounds(f)?;
    let mut n = 0u32;
    while bound.telescoping_error(n) > tol {
        n += 1;
    }
    let mut seen: Vec<Rational> = vec![alpha.clone()];
    let mut beta = alpha.clone();
    for _ in 0..n {
        beta = f.eval(&beta);
        if seen.contains(&beta) {
            return Ok(HeightEstimate {
                value: 0.0,
                error: 0.0,
                iterations: seen.len() as u32,
            });
        }
        let bits = beta.numer().bits() + beta.denom().bits();
        if bits > bit_budget {
            return Err(DynamicsError::BitsizeExceeded {
                bits,
                budget: bit_budget,
            });
        }
        // a long orbit has left the preperiodic range; stop remembering it
        if seen.len() < 64 {
            seen.push(beta.clone());
        }
    }
    let value = naive_height(&beta) / (bound.degree as f64).powi(n as i32);
    Ok(HeightEstimate {
        value,
        error: bound.telescoping_error(n) + value.abs() * 1e-14,
        iterations: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactnum::parse_rational;

    fn q(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn log_plus_examples() {
        assert_eq!(log_plus(0.5), 0.0);
        assert_eq!(log_plus(1.0), 0.0);
        assert!((log_plus(std::f64::consts::E.powi(2)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn naive_height_examples() {
        assert!((naive_height(&q("3/2")) - 3f64.ln()).abs() < 1e-15);
        assert!((naive_height(&q("-7/3")) - 7f64.ln()).abs() < 1e-15);
        assert_eq!(naive_height(&q("0")), 0.0);
        assert_eq!(naive_height(&q("-1")), 0.0);
    }

    #[test]
    fn pure_power_has_zero_constants() {
        let b = height_bounds(&"X^3".parse().unwrap()).unwrap();
        assert_eq!(b.c_up, 0.0);
        assert_eq!(b.c_low, 0.0);
    }

    #[test]
    fn linear_rejected() {
        assert_eq!(
            height_bounds(&"2X+1".parse().unwrap()),
            Err(DynamicsError::DegreeTooSmall { degree: 1, min: 2 })
        );
    }

    #[test]
    fn canonical_height_of_pure_cube() {
        let est = canonical_height(&"X^3".parse().unwrap(), &q("2"), 1e-9).unwrap();
        assert!((est.value - 2f64.ln()).abs() <= 1e-9);
        assert!(est.error <= 1e-9);
    }

    #[test]
    fn canonical_height_of_fixed_point() {
        let f: Poly = "X^3-X^2+1".parse().unwrap();
        let est = canonical_height(&f, &q("1"), 1e-12).unwrap();
        assert_eq!((est.value, est.error), (0.0, 0.0));
    }

    #[test]
    fn canonical_height_budget() {
        let f: Poly = "X^3-X^2+1".parse().unwrap();
        assert!(matches!(
            canonical_height_with_budget(&f, &q("2"), 1e-9, 10_000),
            Err(DynamicsError::BitsizeExceeded { .. })
        ));
    }
}
