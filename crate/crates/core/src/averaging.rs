//! Spherical averages `A_λ f = f * σ_λ`, the maximal operator
//! `A_* f = sup_{λ₀≤λ≤λ₁} |A_λ f|` and its mollified variant.

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::arith::q_eta;
use crate::density::BoundaryMode;
use crate::error::{Error, Result};
use crate::lattice::{enumerate_sphere, isqrt, Sphere};
use crate::par;
use crate::spectral::{build_cutoff, dft, idft_like, sphere_spectrum, GridFunction, Spectrum};

/// Work (`|S_λ|·M^d`) below which the direct sphere sum is used.
pub const DIRECT_WORK_LIMIT: u128 = 1 << 25;

/// How a spherical average is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    /// Pick by work estimate.
    Auto,
    /// `|S_λ|^{−1} Σ_y f(x − qy)`.
    Direct,
    /// `idft(f̂ · σ̂_λ(q·))`.
    Spectral,
}

/// Checks that `q·S_λ` can be applied to `f` without breaking the boundary
/// model: `q | M` when periodic, enough declared padding when truncated.
pub fn check_boundary(f: &GridFunction, lambda: u64, q: u64) -> Result<()> {
    if q == 0 {
        return Err(Error::InvalidParameter("q must be >= 1".into()));
    }
    match f.mode() {
        BoundaryMode::Periodic => {
            if !(f.side() as u64).is_multiple_of(q) {
                return Err(Error::Divisibility(format!(
                    "periodic averages with q = {q} need q | M, M = {}",
                    f.side()
                )));
            }
        }
        BoundaryMode::Truncate => {
            let r = isqrt(lambda);
            let radius = q * (r + u64::from(r * r != lambda));
            let available = f.support().map_or(0, |s| s.pad as u64);
            if available < radius {
                return Err(Error::Padding {
                    required: radius as usize,
                    available: available as usize,
                });
            }
        }
    }
    Ok(())
}

/// `A_λ f` with the sphere dilated by `q`.
pub fn spherical_average(f: &GridFunction, lambda: u64, q: u64) -> Result<GridFunction> {
    spherical_average_with(f, lambda, q, Route::Auto)
}

pub fn spherical_average_with(
    f: &GridFunction,
    lambda: u64,
    q: u64,
    route: Route,
) -> Result<GridFunction> {
    let sphere = enumerate_sphere(f.dim(), lambda)?;
    average_sphere(f, &sphere, q, route, None)
}

fn use_direct(route: Route, sphere: &Sphere, f: &GridFunction) -> bool {
    match route {
        Route::Direct => true,
        Route::Spectral => false,
        Route::Auto => (sphere.count() as u128) * (f.len() as u128) <= DIRECT_WORK_LIMIT,
    }
}

fn average_sphere(
    f: &GridFunction,
    sphere: &Sphere,
    q: u64,
    route: Route,
    f_hat: Option<&Spectrum>,
) -> Result<GridFunction> {
    if sphere.is_empty() {
        return Err(Error::EmptySphere {
            dim: sphere.dim(),
            lambda: sphere.lambda(),
        });
    }
    if sphere.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: sphere.dim(),
        });
    }
    check_boundary(f, sphere.lambda(), q)?;
    if use_direct(route, sphere, f) {
        return Ok(average_direct(f, sphere, q));
    }
    let spec = sphere_spectrum(sphere, f.side(), q)?;
    let product = match f_hat {
        Some(h) => h.multiply(&spec)?,
        None => dft(f).multiply(&spec)?,
    };
    idft_like(&product, f)
}

fn average_direct(f: &GridFunction, sphere: &Sphere, q: u64) -> GridFunction {
    let dim = f.dim();
    let m = f.side() as i64;
    let q = q as i64;
    let w = 1.0 / sphere.count() as f64;
    let vals = f.values();
    // Row-major strides and each sphere point's offset, reduced mod M.
    let shifts: Vec<Vec<i64>> = sphere
        .points()
        .map(|y| y.iter().map(|&c| (-q * c).rem_euclid(m)).collect())
        .collect();
    let out = par::map_indexed(f.len(), |idx| {
        let mut x = vec![0i64; dim];
        let mut rest = idx;
        for slot in x.iter_mut().rev() {
            *slot = (rest % m as usize) as i64;
            rest /= m as usize;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for s in &shifts {
            let mut flat = 0usize;
            for (&xi, &si) in x.iter().zip(s) {
                let mut c = xi + si;
                if c >= m {
                    c -= m;
                }
                flat = flat * m as usize + c as usize;
            }
            acc += vals[flat];
        }
        acc * w
    });
    f.with_values(out).expect("same shape")
}

/// `sup_{λ₀≤λ≤λ₁} |A_λ f|` over integer `λ` with nonempty spheres.
pub fn maximal_average(
    f: &GridFunction,
    lambda0: u64,
    lambda1: u64,
    q: u64,
) -> Result<GridFunction> {
    maximal_from(f, None, lambda0, lambda1, q)
}

fn maximal_from(
    f: &GridFunction,
    f_hat: Option<&Spectrum>,
    lambda0: u64,
    lambda1: u64,
    q: u64,
) -> Result<GridFunction> {
    if lambda1 < lambda0 {
        return Err(Error::InvalidParameter(format!(
            "need lambda0 <= lambda1, got {lambda0} > {lambda1}"
        )));
    }
    check_boundary(f, lambda1, q)?;
    let owned;
    let f_hat = match f_hat {
        Some(h) => h,
        None => {
            owned = dft(f);
            &owned
        }
    };
    let mut best: Option<Vec<f64>> = None;
    for lambda in lambda0..=lambda1 {
        let sphere = enumerate_sphere(f.dim(), lambda)?;
        if sphere.is_empty() {
            continue;
        }
        let avg = average_sphere(f, &sphere, q, Route::Auto, Some(f_hat))?;
        let vals = avg.values();
        match &mut best {
            None => best = Some(vals.iter().map(|v| v.norm()).collect()),
            Some(b) => par::for_each_mut(b, |i, slot| {
                let v = vals[i].norm();
                if v > *slot {
                    *slot = v;
                }
            }),
        }
    }
    let best = best.ok_or(Error::EmptySphere {
        dim: f.dim(),
        lambda: lambda0,
    })?;
    f.with_values(best.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
}

/// Parameters of the mollifier used by [`mollified_maximal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    pub q_eta: BigUint,
    /// `L₂ = η λ₀^{1/2}`.
    pub l2: f64,
}

/// `q_η` and `L₂ = η λ₀^{1/2}`; fails when `L₂ < q_η`, where `ψ_{q_η,L₂}`
/// stops being a cutoff.
pub fn mollifier(eta: f64, lambda0: u64, c_qeta: f64) -> Result<Mollifier> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eta = {eta} must lie in (0, 1)"
        )));
    }
    if lambda0 == 0 {
        return Err(Error::InvalidParameter(
            "the mollified operator needs lambda0 >= 1".into(),
        ));
    }
    let q = q_eta(eta, c_qeta)?;
    let l2 = eta * (lambda0 as f64).sqrt();
    if q.to_f64().is_none_or(|qf| l2 < qf) {
        return Err(Error::DegenerateCutoff {
            l: l2,
            q: q.to_string(),
        });
    }
    Ok(Mollifier { q_eta: q, l2 })
}

/// `f − f * ψ_{q,L}` computed on the torus (`ψ` periodized, which is exact
/// on the frequency side).
pub fn remove_low_frequencies(
    f: &GridFunction,
    q: u64,
    l: f64,
) -> Result<(GridFunction, Spectrum)> {
    let cutoff = build_cutoff(f.dim(), q, l)?;
    let psi_hat = cutoff.spectrum(f.side())?;
    let mut g_hat = dft(f);
    for (v, p) in g_hat.values_mut().iter_mut().zip(psi_hat.values()) {
        *v *= Complex64::new(1.0, 0.0) - *p;
    }
    Ok((idft_like(&g_hat, f)?, g_hat))
}

/// `A_*(f − f * ψ_{q_η,L₂})` with `L₂ = η λ₀^{1/2}`.
pub fn mollified_maximal(
    f: &GridFunction,
    eta: f64,
    lambda0: u64,
    lambda1: u64,
    c_qeta: f64,
) -> Result<GridFunction> {
    let m = mollifier(eta, lambda0, c_qeta)?;
    let q = m.q_eta.to_u64().expect("q_eta below L2 fits in u64");
    let (g, g_hat) = remove_low_frequencies(f, q, m.l2)?;
    maximal_from(&g, Some(&g_hat), lambda0, lambda1, 1)
}

/// `‖output‖₂ / ‖f‖₂`.
pub fn l2_ratio(output: &GridFunction, f: &GridFunction) -> Result<f64> {
    output.check_same_shape(f)?;
    let denom = f.norm_l2();
    if denom == 0.0 {
        return Err(Error::InvalidParameter(
            "l2_ratio needs a nonzero input".into(),
        ));
    }
    Ok(output.norm_l2() / denom)
}

#[cfg(test)]
mod tests;
