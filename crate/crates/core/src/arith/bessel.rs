//! Fourier transform of the normalized surface measure on the unit sphere of
//! `ℝ^d`: `σ̃(r) = Γ(ν+1) (2/z)^ν J_ν(z)` with `z = 2πr`, `ν = d/2 − 1`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::gamma_half;

/// Radial value `σ̃(r)`; even in `r`, `σ̃(0) = 1`.
pub fn continuous_sphere_ft(r: f64, dim: usize) -> Result<f64> {
    if dim < 2 {
        return Err(Error::InvalidParameter(format!(
            "the sphere transform needs d >= 2, got {dim}"
        )));
    }
    if !r.is_finite() {
        return Err(Error::InvalidParameter(format!("radius {r} is not finite")));
    }
    let z = 2.0 * PI * r.abs();
    Ok(lambda_nu(dim, z))
}

/// `Λ_ν(z) = Γ(ν+1)(2/z)^ν J_ν(z)` with `ν = d/2 − 1`.
fn lambda_nu(dim: usize, z: f64) -> f64 {
    let nu = dim as f64 / 2.0 - 1.0;
    if z <= 4.0 + nu {
        return series(nu, z);
    }
    let j = if dim.is_multiple_of(2) {
        bessel_j_integer((dim / 2 - 1) as u32, z)
    } else {
        bessel_j_half((dim - 3) / 2, z)
    };
    gamma_half(dim as u32) * (2.0 / z).powf(nu) * j
}

/// `Σ_k (−z²/4)^k Γ(ν+1)/(k! Γ(ν+k+1))`.
fn series(nu: f64, z: f64) -> f64 {
    let x = -z * z / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let k = k as f64;
        term *= x / (k * (nu + k));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) && k > z {
            break;
        }
    }
    sum
}

/// `J_n(z) = (1/2π) ∫_0^{2π} cos(nθ − z sin θ) dθ`; the integrand is
/// periodic and analytic, so the trapezoid rule converges geometrically.
fn bessel_j_integer(n: u32, z: f64) -> f64 {
    let k = 2 * (z + n as f64).ceil() as usize + 64;
    let h = 2.0 * PI / k as f64;
    let s: f64 = (0..k)
        .map(|i| {
            let t = i as f64 * h;
            (n as f64 * t - z * t.sin()).cos()
        })
        .sum();
    s / k as f64
}

/// `J_{m+1/2}(z) = √(2z/π) j_m(z)`, spherical Bessel by upward recurrence
/// (stable for `z > m`).
fn bessel_j_half(m: usize, z: f64) -> f64 {
    let (s, c) = z.sin_cos();
    let mut j0 = s / z;
    let mut j1 = s / (z * z) - c / z;
    let jm = if m == 0 {
        j0
    } else {
        for l in 1..m {
            let j2 = (2 * l + 1) as f64 / z * j1 - j0;
            j0 = j1;
            j1 = j2;
        }
        j1
    };
    (2.0 * z / PI).sqrt() * jm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_at_zero() {
        for d in 2..9 {
            assert_eq!(continuous_sphere_ft(0.0, d).unwrap(), 1.0);
        }
        assert!(continuous_sphere_ft(0.3, 1).is_err());
    }

    #[test]
    fn three_dimensional_closed_form() {
        for i in 1..400 {
            let r = i as f64 * 0.05;
            let z = 2.0 * PI * r;
            let want = z.sin() / z;
            let got = continuous_sphere_ft(r, 3).unwrap();
            assert!((got - want).abs() < 1e-12, "r={r}: {got} vs {want}");
        }
    }

    #[test]
    fn branches_meet_continuously() {
        // Series and the large-argument routes agree where they hand over.
        for d in 2..10 {
            let nu = d as f64 / 2.0 - 1.0;
            let z = 4.0 + nu;
            let a = series(nu, z + 1e-9);
            let j = if d % 2 == 0 {
                bessel_j_integer((d / 2 - 1) as u32, z + 1e-9)
            } else {
                bessel_j_half((d - 3) / 2, z + 1e-9)
            };
            let b = gamma_half(d as u32) * (2.0 / (z + 1e-9)).powf(nu) * j;
            assert!((a - b).abs() < 1e-11, "d={d}: {a} vs {b}");
        }
    }

    #[test]
    fn bounded_by_one() {
        for d in 2..8 {
            for i in 0..2000 {
                let v = continuous_sphere_ft(i as f64 * 0.013, d).unwrap();
                assert!(v.abs() <= 1.0 + 1e-12);
            }
        }
    }
}
