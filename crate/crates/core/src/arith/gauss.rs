//! Normalized quadratic Gauss sums
//! `G(a/q, ℓ) = q^{−d} Σ_{r ∈ (ℤ/qℤ)^d} e((a|r|² + ℓ·r)/q)`.

use num_complex::Complex64;
use num_integer::Integer;

use crate::error::{Error, Result};
use crate::spectral::unit_phase;

fn check(a: u64, q: u64) -> Result<()> {
    if q == 0 {
        return Err(Error::InvalidParameter("q must be >= 1".into()));
    }
    if a.gcd(&q) != 1 {
        return Err(Error::NotCoprime { a, q });
    }
    Ok(())
}

/// One-dimensional factor `q^{−1} Σ_{r mod q} e((a r² + ℓ r)/q)`.
pub fn gauss_sum_1d(a: u64, q: u64, ell: i64) -> Result<Complex64> {
    check(a, q)?;
    Ok(sum_1d(a, q, ell))
}

fn sum_1d(a: u64, q: u64, ell: i64) -> Complex64 {
    let qi = q as i128;
    let (a, l) = (a as i128 % qi, (ell as i128).rem_euclid(qi));
    let total: Complex64 = (0..qi)
        .map(|r| {
            let n = (a * r * r + l * r).rem_euclid(qi);
            unit_phase(n as f64 / q as f64)
        })
        .sum();
    total / q as f64
}

/// `G(a/q, ℓ)` as the product of its one-dimensional factors.
pub fn gauss_sum(a: u64, q: u64, ell: &[i64]) -> Result<Complex64> {
    check(a, q)?;
    if ell.is_empty() {
        return Err(Error::InvalidParameter(
            "ell must have d >= 1 entries".into(),
        ));
    }
    Ok(ell
        .iter()
        .map(|&l| sum_1d(a, q, l))
        .fold(Complex64::new(1.0, 0.0), |acc, g| acc * g))
}

/// `G(a/q, ℓ)` by the full `q^d`-term sum; reference for the product form.
pub fn gauss_sum_direct(a: u64, q: u64, ell: &[i64]) -> Result<Complex64> {
    check(a, q)?;
    let d = ell.len();
    if d == 0 {
        return Err(Error::InvalidParameter(
            "ell must have d >= 1 entries".into(),
        ));
    }
    let qi = q as i128;
    let terms = (q as u128)
        .checked_pow(d as u32)
        .filter(|&t| t <= 1 << 28)
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "q^d = {q}^{d} terms is too many for the direct sum"
            ))
        })?;
    let mut r = vec![0i128; d];
    let mut total = Complex64::new(0.0, 0.0);
    for _ in 0..terms {
        let mut n = 0i128;
        for (&ri, &li) in r.iter().zip(ell) {
            n += a as i128 * ri * ri + li as i128 * ri;
        }
        total += unit_phase(n.rem_euclid(qi) as f64 / q as f64);
        for ri in r.iter_mut().rev() {
            *ri += 1;
            if *ri < qi {
                break;
            }
            *ri = 0;
        }
    }
    Ok(total / (terms as f64))
}
