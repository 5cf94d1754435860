//! Arithmetic structure: `q_η`, major arcs and annuli, Gauss sums, the
//! continuous sphere transform and the single-fraction multipliers.

mod bessel;
mod gauss;
mod keyu;
mod multiplier;

pub use bessel::continuous_sphere_ft;
pub use gauss::{gauss_sum, gauss_sum_1d, gauss_sum_direct};
pub use keyu::{verify_keyu, KeyUParams, KeyUReport};
pub use multiplier::{
    multiplier_g, multiplier_m, multiplier_m_factored, multiplier_n, phi, phi_prime,
};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack applied to closed boundaries so that values equal to a
/// threshold up to rounding count as inside.
pub const BOUNDARY_RTOL: f64 = 1e-9;

/// `⌊C η^{−2}⌋`, robust to representation error (e.g. `1/0.1² = 99.999…`).
pub fn q_eta_threshold(eta: f64, c: f64) -> Result<u64> {
    if !(eta > 0.0) || !(c > 0.0) || !eta.is_finite() || !c.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need eta > 0 and C > 0, got eta = {eta}, C = {c}"
        )));
    }
    let x = c / (eta * eta);
    if x < 1.0 - 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "C·eta^-2 = {x} is below 1, so q_eta is undefined"
        )));
    }
    if x > 1e7 {
        return Err(Error::InvalidParameter(format!(
            "C·eta^-2 = {x} is too large to form the lcm"
        )));
    }
    Ok(((x * (1.0 + 1e-12)).floor() as u64).max(1))
}

/// `lcm{1, …, t}`.
pub fn lcm_upto(t: u64) -> BigUint {
    (2..=t).fold(BigUint::one(), |acc, k| acc.lcm(&BigUint::from(k)))
}

/// `q_η = lcm{1 ≤ q ≤ C η^{−2}}`, exact.
pub fn q_eta(eta: f64, c: f64) -> Result<BigUint> {
    Ok(lcm_upto(q_eta_threshold(eta, c)?))
}

/// Squared Euclidean distance from `ξ` to the nearest point of
/// `(q^{−1}ℤ)^d`, computed by coordinate-wise rounding.
pub fn nearest_center_dist2(xi: &[f64], q: u64) -> f64 {
    let q = q as f64;
    xi.iter()
        .map(|&x| {
            let r = x - (x * q).round() / q;
            r * r
        })
        .sum()
}

/// Same distance at a grid frequency `k/M`, from exact residues `kq mod M`;
/// `q` may be arbitrarily large.
pub fn nearest_center_dist2_grid(k: &[usize], side: usize, q: &BigUint) -> f64 {
    let m = side as u128;
    let q_mod = (q % BigUint::from(side))
        .to_u128()
        .expect("residue below M");
    let scale = q.to_f64().unwrap_or(f64::INFINITY) * side as f64;
    k.iter()
        .map(|&kk| {
            let r = (kk as u128 * q_mod) % m;
            let r = r.min(m - r) as f64 / scale;
            r * r
        })
        .sum()
}

fn within(value: f64, lo: f64, hi: f64) -> bool {
    value >= lo * (1.0 - BOUNDARY_RTOL) && value <= hi * (1.0 + BOUNDARY_RTOL)
}

/// `ξ ∈ 𝔐_{q,L}`: distance to `(q^{−1}ℤ)^d` at most `1/L` (closed).
pub fn in_major_arcs(xi: &[f64], q: u64, l: f64) -> bool {
    within(nearest_center_dist2(xi, q), 0.0, 1.0 / (l * l))
}

/// Annulus membership: squared distance to `(q^{−1}ℤ)^d` in
/// `[η²/λ₁, η^{−2}/λ₀]` (closed), with `λ₁ = λ₀` for the single annulus.
pub fn in_annulus(xi: &[f64], eta: f64, q: u64, lambda0: u64, lambda1: Option<u64>) -> bool {
    let (lo, hi) = annulus_bounds(eta, lambda0, lambda1.unwrap_or(lambda0));
    within(nearest_center_dist2(xi, q), lo, hi)
}

/// `(η²/λ₁, η^{−2}/λ₀)`.
pub fn annulus_bounds(eta: f64, lambda0: u64, lambda1: u64) -> (f64, f64) {
    let e2 = eta * eta;
    (e2 / lambda1 as f64, 1.0 / (e2 * lambda0 as f64))
}

/// Frequency sets described by arithmetic parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArcSystem {
    /// `𝔐_{q,L}`.
    MajorArc { q: BigUint, l: f64 },
    /// `Ω_λ`.
    AnnulusSingle { q: BigUint, eta: f64, lambda: u64 },
    /// `Ω_{λ₀,λ₁}`.
    AnnulusPair {
        q: BigUint,
        eta: f64,
        lambda0: u64,
        lambda1: u64,
    },
}

impl ArcSystem {
    pub fn annulus(q: BigUint, eta: f64, lambda: u64) -> Result<Self> {
        Self::annulus_pair(q, eta, lambda, lambda).map(|s| match s {
            ArcSystem::AnnulusPair {
                q, eta, lambda0, ..
            } => ArcSystem::AnnulusSingle {
                q,
                eta,
                lambda: lambda0,
            },
            other => other,
        })
    }

    pub fn annulus_pair(q: BigUint, eta: f64, lambda0: u64, lambda1: u64) -> Result<Self> {
        if lambda0 == 0 || lambda1 < lambda0 {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= lambda0 <= lambda1, got {lambda0}, {lambda1}"
            )));
        }
        let (lo, hi) = annulus_bounds(eta, lambda0, lambda1);
        if !(eta > 0.0) || lo >= hi {
            return Err(Error::InvalidParameter(format!(
                "annulus inner radius² {lo} is not below outer radius² {hi}"
            )));
        }
        Ok(ArcSystem::AnnulusPair {
            q,
            eta,
            lambda0,
            lambda1,
        })
    }

    pub fn q(&self) -> &BigUint {
        match self {
            ArcSystem::MajorArc { q, .. }
            | ArcSystem::AnnulusSingle { q, .. }
            | ArcSystem::AnnulusPair { q, .. } => q,
        }
    }

    /// Closed interval for the squared nearest-center distance.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            ArcSystem::MajorArc { l, .. } => (0.0, 1.0 / (l * l)),
            ArcSystem::AnnulusSingle { eta, lambda, .. } => annulus_bounds(eta, lambda, lambda),
            ArcSystem::AnnulusPair {
                eta,
                lambda0,
                lambda1,
                ..
            } => annulus_bounds(eta, lambda0, lambda1),
        }
    }

    pub fn contains(&self, xi: &[f64]) -> bool {
        let q = self.q().to_u64().unwrap_or(u64::MAX);
        let (lo, hi) = self.bounds();
        within(nearest_center_dist2(xi, q), lo, hi)
    }

    /// Membership of the grid frequency `k/M`, exact in `q`.
    pub fn contains_grid(&self, k: &[usize], side: usize) -> bool {
        let (lo, hi) = self.bounds();
        within(nearest_center_dist2_grid(k, side, self.q()), lo, hi)
    }
}
