//! Single-fraction multipliers
//! `m_λ^{a/q}(ξ) = Σ_ℓ G(a/q,ℓ) φ_q(ξ−ℓ/q) σ̃_λ(ξ−ℓ/q)` and the factors
//! `g^{a/q}` and `n_λ^q` with `m = g·n`.
//!
//! `λ` here is a radius scale, `σ̃_λ(ξ) = σ̃(λξ)`; `φ_q(ξ) = φ(qξ)`.

use num_complex::Complex64;

use super::bessel::continuous_sphere_ft;
use super::gauss::gauss_sum;
use crate::error::{Error, Result};

/// `exp(−1/t)` for `t > 0`, else 0.
fn flat(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Smooth step: 0 for `t ≤ 0`, 1 for `t ≥ 1`.
fn step(t: f64) -> f64 {
    let (a, b) = (flat(t), flat(1.0 - t));
    a / (a + b)
}

fn norm(xi: &[f64]) -> f64 {
    xi.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Radial cutoff: 1 on `|ξ| ≤ 1/8`, 0 on `|ξ| ≥ 1/4`.
pub fn phi(xi: &[f64]) -> f64 {
    1.0 - step((norm(xi) - 0.125) * 8.0)
}

/// Radial cutoff equal to 1 on the support of [`phi`]: 1 on `|ξ| ≤ 1/4`,
/// 0 on `|ξ| ≥ 3/8`.
pub fn phi_prime(xi: &[f64]) -> f64 {
    1.0 - step((norm(xi) - 0.25) * 8.0)
}

fn validate(q: u64, lambda: f64, xi: &[f64]) -> Result<()> {
    if q == 0 {
        return Err(Error::InvalidParameter("q must be >= 1".into()));
    }
    if xi.len() < 2 {
        return Err(Error::InvalidParameter("multipliers need d >= 2".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda = {lambda} must be >= 0"
        )));
    }
    Ok(())
}

/// `m_λ^{a/q}(ξ)`. The supports of `φ_q(· − ℓ/q)` are disjoint, so only the
/// nearest `ℓ = round(qξ)` contributes.
pub fn multiplier_m(a: u64, q: u64, lambda: f64, xi: &[f64]) -> Result<Complex64> {
    validate(q, lambda, xi)?;
    let qf = q as f64;
    let ell: Vec<i64> = xi.iter().map(|&x| (x * qf).round() as i64).collect();
    let g = gauss_sum(a, q, &ell)?;
    let delta: Vec<f64> = xi
        .iter()
        .zip(&ell)
        .map(|(&x, &l)| x - l as f64 / qf)
        .collect();
    let scaled: Vec<f64> = delta.iter().map(|d| d * qf).collect();
    let cut = phi(&scaled);
    if cut == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(g * cut * continuous_sphere_ft(lambda * norm(&delta), xi.len())?)
}

/// All `ℓ ∈ ℤ^d` with `|qξ_i − ℓ_i| < reach` in every coordinate.
fn neighbours(q: u64, xi: &[f64], reach: f64) -> Vec<Vec<i64>> {
    let qf = q as f64;
    let ranges: Vec<(i64, i64)> = xi
        .iter()
        .map(|&x| {
            (
                (x * qf - reach).ceil() as i64,
                (x * qf + reach).floor() as i64,
            )
        })
        .collect();
    let mut out = vec![Vec::new()];
    for &(lo, hi) in &ranges {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (lo..=hi).map(move |l| {
                    let mut p = prefix.clone();
                    p.push(l);
                    p
                })
            })
            .collect();
    }
    out
}

/// `g^{a/q}(ξ) = Σ_ℓ G(a/q,ℓ) φ'_q(ξ − ℓ/q)`, summed over every `ℓ` whose
/// cutoff can be nonzero.
pub fn multiplier_g(a: u64, q: u64, xi: &[f64]) -> Result<Complex64> {
    validate(q, 0.0, xi)?;
    let qf = q as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for ell in neighbours(q, xi, 0.375) {
        let scaled: Vec<f64> = xi
            .iter()
            .zip(&ell)
            .map(|(&x, &l)| x * qf - l as f64)
            .collect();
        let w = phi_prime(&scaled);
        if w != 0.0 {
            total += gauss_sum(a, q, &ell)? * w;
        }
    }
    Ok(total)
}

/// `n_λ^q(ξ) = Σ_ℓ φ_q(ξ − ℓ/q) σ̃_λ(ξ − ℓ/q)`.
pub fn multiplier_n(q: u64, lambda: f64, xi: &[f64]) -> Result<f64> {
    validate(q, lambda, xi)?;
    let qf = q as f64;
    let mut total = 0.0;
    for ell in neighbours(q, xi, 0.25) {
        let delta: Vec<f64> = xi
            .iter()
            .zip(&ell)
            .map(|(&x, &l)| x - l as f64 / qf)
            .collect();
        let scaled: Vec<f64> = delta.iter().map(|d| d * qf).collect();
        let w = phi(&scaled);
        if w != 0.0 {
            total += w * continuous_sphere_ft(lambda * norm(&delta), xi.len())?;
        }
    }
    Ok(total)
}

/// `g^{a/q}(ξ)·n_λ^q(ξ)`, the factored route to `m_λ^{a/q}(ξ)`.
pub fn multiplier_m_factored(a: u64, q: u64, lambda: f64, xi: &[f64]) -> Result<Complex64> {
    Ok(multiplier_g(a, q, xi)? * multiplier_n(q, lambda, xi)?)
}
