//! Empirical check of the minor-arc bound for `σ̂_λ`: sample frequencies away
//! from the major arcs and record the largest `|σ̂_λ(ξ)|`.

use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{in_major_arcs, lcm_upto};
use crate::error::{Error, Result};
use crate::lattice::{enumerate_sphere, representation_count, Sphere};
use crate::par;
use crate::spectral::{sigma_hat, sigma_hat_by_coordinates};

/// Samples drawn from one RNG stream; fixes the sample→stream assignment
/// independently of the thread count.
const CHUNK: usize = 256;
/// Rejection attempts allowed per sample.
const MAX_ATTEMPTS: usize = 100_000;
/// Spheres up to this size are summed directly.
const DIRECT_LIMIT: u128 = 4096;
/// Largest threshold whose lcm fits in 64 bits.
const MAX_Q_CAP: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyUParams {
    pub dim: usize,
    pub lambda: u64,
    pub eta: f64,
    pub c_keyu: f64,
    /// Cap on the denominators whose arcs are excluded.
    pub q_max: u64,
    pub n_samples: usize,
    pub seed: u64,
    /// Sample inside the arc around the origin instead of outside all arcs.
    pub inside_arcs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyUReport {
    pub dim: usize,
    pub lambda: u64,
    pub eta: f64,
    pub c_keyu: f64,
    pub q_cap: u64,
    /// `min(⌊C η^{−2}⌋, q_cap)`: every denominator up to this is excluded.
    pub q_threshold: u64,
    /// lcm of the excluded denominators; arcs are centred on `(Q^{−1}ℤ)^d`.
    pub q_excluded: u64,
    /// `(ηλ)^{−1/2}`.
    pub arc_radius: f64,
    pub sphere_count: u128,
    pub n_samples: usize,
    pub max_abs: f64,
    pub argmax_xi: Vec<f64>,
    pub seed: u64,
    pub inside_arcs: bool,
    /// `|S_λ| = 1`, so `|σ̂_λ| ≡ 1`.
    pub degenerate: bool,
}

enum Evaluator {
    Direct(Sphere),
    Coordinates {
        dim: usize,
        lambda: u64,
        count: u128,
    },
}

impl Evaluator {
    fn abs(&self, xi: &[f64]) -> Result<f64> {
        let v: Complex64 = match self {
            Evaluator::Direct(s) => sigma_hat(s, xi)?,
            Evaluator::Coordinates { dim, lambda, count } => {
                sigma_hat_by_coordinates(*dim, *lambda, *count, xi)?
            }
        };
        Ok(v.norm())
    }
}

pub fn verify_keyu(p: &KeyUParams) -> Result<KeyUReport> {
    if p.dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if !(p.eta > 0.0) || !(p.c_keyu > 0.0) {
        return Err(Error::InvalidParameter(
            "need eta > 0 and C_keyU > 0".into(),
        ));
    }
    if p.q_max == 0 || p.q_max > MAX_Q_CAP {
        return Err(Error::InvalidParameter(format!(
            "q cap must be in 1..={MAX_Q_CAP}, got {}",
            p.q_max
        )));
    }
    if p.n_samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let count = representation_count(p.dim, p.lambda)?;
    if count == 0 {
        return Err(Error::EmptySphere {
            dim: p.dim,
            lambda: p.lambda,
        });
    }
    let eval = if count <= DIRECT_LIMIT {
        Evaluator::Direct(enumerate_sphere(p.dim, p.lambda)?)
    } else {
        Evaluator::Coordinates {
            dim: p.dim,
            lambda: p.lambda,
            count,
        }
    };
    let raw = (p.c_keyu / (p.eta * p.eta) * (1.0 + 1e-12)).floor();
    let threshold = (raw.max(1.0) as u64).min(p.q_max);
    let q = lcm_upto(threshold)
        .to_u64()
        .expect("lcm below the cap fits in u64");
    let arc_l = (p.eta * p.lambda.max(1) as f64).sqrt();
    let radius = 1.0 / arc_l;

    let chunks = p.n_samples.div_ceil(CHUNK);
    let results = par::map_indexed(chunks, |c| -> Result<Vec<(f64, Vec<f64>)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        rng.set_stream(c as u64);
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(p.n_samples);
        let mut out = Vec::with_capacity(hi - lo);
        for _ in lo..hi {
            let xi = if p.inside_arcs {
                sample_in_ball(&mut rng, p.dim, radius)
            } else {
                sample_outside(&mut rng, p.dim, q, arc_l)?
            };
            out.push((eval.abs(&xi)?, xi));
        }
        Ok(out)
    });
    let mut samples = Vec::with_capacity(p.n_samples);
    for r in results {
        samples.extend(r?);
    }
    let (best, max_abs) =
        par::argmax_indexed(samples.len(), |i| samples[i].0).expect("n_samples >= 1");
    Ok(KeyUReport {
        dim: p.dim,
        lambda: p.lambda,
        eta: p.eta,
        c_keyu: p.c_keyu,
        q_cap: p.q_max,
        q_threshold: threshold,
        q_excluded: q,
        arc_radius: radius,
        sphere_count: count,
        n_samples: p.n_samples,
        max_abs,
        argmax_xi: samples[best].1.clone(),
        seed: p.seed,
        inside_arcs: p.inside_arcs,
        degenerate: count == 1,
    })
}

fn sample_outside(rng: &mut ChaCha8Rng, dim: usize, q: u64, arc_l: f64) -> Result<Vec<f64>> {
    for _ in 0..MAX_ATTEMPTS {
        let xi: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        if !in_major_arcs(&xi, q, arc_l) {
            return Ok(xi);
        }
    }
    Err(Error::Sampling(format!(
        "no frequency outside the arcs after {MAX_ATTEMPTS} attempts; the arcs cover the torus"
    )))
}

/// Uniform point of the ball of the given radius about the origin, reduced
/// into `[0,1)^d`.
fn sample_in_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return v
                .into_iter()
                .map(|x| (x * radius).rem_euclid(1.0))
                .collect();
        }
    }
}
