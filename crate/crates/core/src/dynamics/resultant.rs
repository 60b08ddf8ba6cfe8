//! Sylvester resultants and discriminants over the rationals.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use super::Poly;
use crate::exactnum::Rational;

/// Resultant of two coefficient vectors (`c_0` first) read with formal
/// degrees `m` and `n`; missing top coefficients count as zero, which gives
/// the resultant of the corresponding binary forms.
pub fn resultant_formal(f: &[Rational], m: usize, g: &[Rational], n: usize) -> Rational {
    let size = m + n;
    if size == 0 {
        return Rational::one();
    }
    let at = |v: &[Rational], i: usize| v.get(i).cloned().unwrap_or_else(Rational::zero);
    let mut rows: Vec<Vec<Rational>> = Vec::with_capacity(size);
    for shift in 0..n {
        let mut row = vec![Rational::zero(); size];
        for j in 0..=m {
            row[shift + j] = at(f, m - j);
        }
        rows.push(row);
    }
    for shift in 0..m {
        let mut row = vec![Rational::zero(); size];
        for j in 0..=n {
            row[shift + j] = at(g, n - j);
        }
        rows.push(row);
    }
    determinant(rows)
}

pub fn resultant(f: &Poly, g: &Poly) -> Rational {
    resultant_formal(f.coeffs(), f.degree(), g.coeffs(), g.degree())
}

/// `disc(f) = (-1)^(d(d-1)/2) Res(f, f') / c_d`; zero exactly when `f` has
/// a repeated root.
pub fn discriminant(f: &Poly) -> Rational {
    let d = f.degree();
    let Some(df) = f.derivative() else {
        return Rational::one();
    };
    // f' may lose degree only if d * c_d = 0, which cannot happen over Q.
    let res = resultant(f, &df);
    let sign = if (d * (d.saturating_sub(1)) / 2) % 2 == 0 {
        Rational::one()
    } else {
        -Rational::one()
    };
    sign * res / f.leading()
}

fn determinant(mut a: Vec<Vec<Rational>>) -> Rational {
    let n = a.len();
    let mut det = Rational::one();
    for col in 0..n {
        let Some(pivot) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return Rational::zero();
        };
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        let p = a[col][col].clone();
        det *= &p;
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &p;
            for c in col..n {
                let delta = &factor * &a[col][c];
                a[r][c] -= delta;
            }
        }
    }
    det
}

/// Integer resultant helper for forms given with integer coefficients.
pub fn resultant_formal_int(f: &[BigInt], m: usize, g: &[BigInt], n: usize) -> BigInt {
    let fr: Vec<Rational> = f.iter().cloned().map(Rational::from_integer).collect();
    let gr: Vec<Rational> = g.iter().cloned().map(Rational::from_integer).collect();
    resultant_formal(&fr, m, &gr, n).to_integer()
}
