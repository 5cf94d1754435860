//! Distance-set checks on finite sets: the counting identity, unpinned and
//! pinned ratio searches, and the two dichotomy reports.

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::arith::{q_eta, ArcSystem};
use crate::averaging::{maximal_average, mollified_maximal, mollifier};
use crate::density::{box_density, unflatten, BoundaryMode, PointSet};
use crate::error::{Error, Result};
use crate::lattice::{count_translates, enumerate_sphere, isqrt, Sphere};
use crate::par;
use crate::spectral::{build_cutoff, dft, idft_like, sphere_spectrum, GridFunction, Spectrum};

/// Both sides of `Σ_{x∈A} |A∩(x+S_λ)|/|S_λ| = M^{−d} Σ_k |1̂_A(k/M)|² σ̂_λ(k/M)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub lambda: u64,
    pub grid_side: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Result of the unpinned search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnpinnedResult {
    pub lambda: u64,
    pub q: u64,
    pub density: f64,
    pub best_x: Vec<i64>,
    pub best_ratio: f64,
    /// `δ − ε`.
    pub threshold: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaRatio {
    pub lambda: u64,
    pub ratio: f64,
}

/// Result of the pinned search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinnedResult {
    pub lambda0: u64,
    pub lambda1: u64,
    pub q: u64,
    pub density: f64,
    pub threshold: f64,
    /// First `x ∈ A` in lexicographic order whose ratio beats the threshold
    /// at every `λ` in the window.
    pub witness: Option<Vec<i64>>,
    /// Per-λ ratios at the witness.
    pub ratios: Vec<LambdaRatio>,
}

/// Grid side used for spectral evaluation: `N` when periodic, otherwise the
/// box plus `q⌈√λ⌉` of padding on each side.
pub fn spectral_grid_side(set: &PointSet, lambda_max: u64, q: u64) -> usize {
    match set.mode() {
        BoundaryMode::Periodic => set.side(),
        BoundaryMode::Truncate => set.side() + 2 * pad_for(lambda_max, q),
    }
}

fn pad_for(lambda: u64, q: u64) -> usize {
    let r = isqrt(lambda);
    (q * (r + u64::from(r * r != lambda))) as usize
}

fn nonempty_sphere(dim: usize, lambda: u64) -> Result<Sphere> {
    let s = enumerate_sphere(dim, lambda)?;
    if s.is_empty() {
        return Err(Error::EmptySphere { dim, lambda });
    }
    Ok(s)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must be positive"
        )));
    }
    Ok(())
}

fn real_pairing(f_hat: &Spectrum, weight: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    let v = f_hat.values();
    let n = v.len();
    par::sum_indexed(n, |i| v[i].norm_sqr() * weight(i)) / n as f64
}

/// Combinatorial vs spectral evaluation of `⟨1_A, A_λ 1_A⟩`.
pub fn count_identity_check(set: &PointSet, lambda: u64) -> Result<IdentityReport> {
    let sphere = enumerate_sphere(set.dim(), lambda)?;
    if sphere.is_empty() {
        return Err(Error::EmptySphere {
            dim: set.dim(),
            lambda,
        });
    }
    let s = sphere.count() as f64;
    let lhs = par::sum_indexed(set.len(), |i| {
        count_translates(set, set.point(i), &sphere, 1) as f64
    }) / s;
    let side = spectral_grid_side(set, lambda, 1);
    let f = GridFunction::indicator(set, side)?;
    let f_hat = dft(&f);
    let sigma = sphere_spectrum(&sphere, side, 1)?;
    let sv = sigma.values();
    let rhs = real_pairing(&f_hat, |i| sv[i].re);
    Ok(IdentityReport {
        lambda,
        grid_side: side,
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// `max_{x∈A} |A∩(x+qS_λ)|/|S_λ|` against `δ − ε`.
pub fn unpinned_check(set: &PointSet, lambda: u64, epsilon: f64, q: u64) -> Result<UnpinnedResult> {
    check_epsilon(epsilon)?;
    if q == 0 {
        return Err(Error::InvalidParameter("q must be >= 1".into()));
    }
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let sphere = nonempty_sphere(set.dim(), lambda)?;
    let s = sphere.count() as f64;
    let (best, best_ratio) = par::argmax_indexed(set.len(), |i| {
        count_translates(set, set.point(i), &sphere, q as i64) as f64 / s
    })
    .expect("nonempty set");
    let density = box_density(set);
    let threshold = density - epsilon;
    Ok(UnpinnedResult {
        lambda,
        q,
        density,
        best_x: set.point(best).to_vec(),
        best_ratio,
        threshold,
        holds: best_ratio > threshold,
    })
}

fn window_spheres(dim: usize, lambda0: u64, lambda1: u64) -> Result<Vec<Sphere>> {
    if lambda1 < lambda0 {
        return Err(Error::InvalidParameter(format!(
            "need lambda0 <= lambda1, got {lambda0} > {lambda1}"
        )));
    }
    let spheres: Vec<Sphere> = (lambda0..=lambda1)
        .map(|l| enumerate_sphere(dim, l))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect();
    if spheres.is_empty() {
        return Err(Error::EmptySphere {
            dim,
            lambda: lambda0,
        });
    }
    Ok(spheres)
}

fn ratios_at(set: &PointSet, x: &[i64], spheres: &[Sphere], q: u64) -> Vec<LambdaRatio> {
    spheres
        .iter()
        .map(|s| LambdaRatio {
            lambda: s.lambda(),
            ratio: count_translates(set, x, s, q as i64) as f64 / s.count() as f64,
        })
        .collect()
}

/// First `x ∈ A` (lexicographic) whose ratio exceeds `δ − ε` for every
/// integer `λ ∈ [λ₀, λ₁]` with a nonempty sphere.
pub fn pinned_check(
    set: &PointSet,
    lambda0: u64,
    lambda1: u64,
    epsilon: f64,
    q: u64,
) -> Result<PinnedResult> {
    check_epsilon(epsilon)?;
    if q == 0 {
        return Err(Error::InvalidParameter("q must be >= 1".into()));
    }
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let spheres = window_spheres(set.dim(), lambda0, lambda1)?;
    let density = box_density(set);
    let threshold = density - epsilon;
    let found = par::find_first(set.len(), |i| {
        let x = set.point(i);
        spheres
            .iter()
            .all(|s| count_translates(set, x, s, q as i64) as f64 / s.count() as f64 > threshold)
    });
    let (witness, ratios) = match found {
        Some(i) => {
            let x = set.point(i);
            (Some(x.to_vec()), ratios_at(set, x, &spheres, q))
        }
        None => (None, Vec::new()),
    };
    Ok(PinnedResult {
        lambda0,
        lambda1,
        q,
        density,
        threshold,
        witness,
        ratios,
    })
}

/// Branch (i): a point whose translated-sphere ratio beats `δ − ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchI {
    /// Maximizer of the ratio (of the smallest ratio over the window in the
    /// pinned report); smallest in lexicographic order on ties.
    pub best_x: Vec<i64>,
    pub best_ratio: f64,
    pub threshold: f64,
    pub holds: bool,
    /// Pinned report only: first lexicographic witness and its ratios.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub witness_ratios: Vec<LambdaRatio>,
}

/// Branch (ii): normalized Fourier mass of `1_A` on the annulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchII {
    /// `(1/|A|) M^{−d} Σ_{k/M ∈ Ω} |1̂_A(k/M)|²`.
    pub fourier_mass: f64,
    /// Number of grid frequencies in `Ω`.
    pub frequencies: usize,
    /// `"c*epsilon"` or `"c*epsilon^2"`.
    pub threshold_form: String,
    pub constant: f64,
    pub threshold: f64,
    pub holds: bool,
}

/// Terms of the smoothing decomposition `f = f₁ + (f₂ − f₁) + (f − f₂)` with
/// `f₁ = f*ψ_{q_η,L₁}`, `f₂ = f*ψ_{q_η,L₂}`. Entries are absent (with a
/// reason) when the corresponding `L` is below `q_η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Decomposition {
    pub l1: f64,
    pub l2: f64,
    /// Single: `⟨f, A_λ f₁⟩`.
    pub main_term: Option<f64>,
    /// Single: `⟨f, A_λ (f₂ − f₁)⟩`.
    pub middle_term: Option<f64>,
    /// Single: `⟨f, A_λ (f − f₂)⟩`.
    pub high_term: Option<f64>,
    /// Single: `‖A_λ (f − f₂)‖₂`.
    pub high_norm: Option<f64>,
    /// Pinned: `⟨f, A_*(1 − f₁)⟩`.
    pub maximal_complement_term: Option<f64>,
    /// Pinned: `⟨f, A_{*,η} f⟩ = ⟨f, A_*(f − f₂)⟩`.
    pub mollified_term: Option<f64>,
    /// `|E|`, `E = {x ∈ B_N : f₁(x) ≤ δ − C_E η}`.
    pub exceptional_size: Option<usize>,
    pub exceptional_constant: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

/// Where the asymptotic statement would apply: `η^{−4} q_η² ≤ λ ≤ η^{11} N²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterWindow {
    pub lower: f64,
    pub upper: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub kind: String,
    pub lambda0: u64,
    pub lambda1: u64,
    pub epsilon: f64,
    pub eta: f64,
    pub c_qeta: f64,
    pub q_eta: String,
    pub grid_side: usize,
    pub set_size: usize,
    pub density: f64,
    pub branch_i: BranchI,
    pub branch_ii: BranchII,
    pub decomposition: Decomposition,
    pub window: ParameterWindow,
}

/// Tunable constants of the dichotomy reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DichotomyConstants {
    /// `q_η = lcm{1 ≤ q ≤ C η^{−2}}`.
    pub c_qeta: f64,
    /// Branch (ii) holds when the mass is at least this times `ε` (or `ε²`).
    pub c_branch: f64,
    /// Constant in the exceptional set threshold `δ − C_E η`.
    pub c_exceptional: f64,
}

impl Default for DichotomyConstants {
    fn default() -> Self {
        Self {
            c_qeta: 1.0,
            c_branch: 1.0,
            c_exceptional: 1.0,
        }
    }
}

/// `(1/|A|) M^{−d} Σ_{k/M ∈ Ω} |f̂(k/M)|²` and the number of frequencies in `Ω`.
pub fn annulus_mass(f_hat: &Spectrum, set_size: usize, arcs: &ArcSystem) -> (f64, usize) {
    let dim = f_hat.dim();
    let side = f_hat.side();
    let inside: Vec<bool> = par::map_indexed(f_hat.values().len(), |idx| {
        let mut k = vec![0usize; dim];
        unflatten(idx, side, &mut k);
        arcs.contains_grid(&k, side)
    });
    let mass = real_pairing(f_hat, |i| if inside[i] { 1.0 } else { 0.0 }) / set_size as f64;
    (mass, inside.iter().filter(|&&b| b).count())
}

fn window(eta: f64, q: &BigUint, lambda0: u64, lambda1: u64, n: usize) -> ParameterWindow {
    let qf = q.to_f64().unwrap_or(f64::INFINITY);
    let lower = qf * qf / eta.powi(4);
    let upper = eta.powi(11) * (n as f64) * (n as f64);
    ParameterWindow {
        lower,
        upper,
        inside: lower <= lambda0 as f64 && lambda1 as f64 <= upper,
    }
}

struct Prepared {
    q: BigUint,
    side: usize,
    f: GridFunction,
    f_hat: Spectrum,
    density: f64,
}

fn prepare(set: &PointSet, lambda1: u64, eta: f64, c: &DichotomyConstants) -> Result<Prepared> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eta = {eta} must be positive"
        )));
    }
    let q = q_eta(eta, c.c_qeta)?;
    let side = spectral_grid_side(set, lambda1, 1);
    let f = GridFunction::indicator(set, side)?;
    let f_hat = dft(&f);
    Ok(Prepared {
        q,
        side,
        f,
        f_hat,
        density: box_density(set),
    })
}

/// `q_η` as a machine integer when `L ≥ q_η`.
fn usable_q(q: &BigUint, l: f64) -> Option<u64> {
    q.to_u64().filter(|&qq| l >= qq as f64)
}

fn exceptional_size(set: &PointSet, f1: &GridFunction, threshold: f64) -> usize {
    let side = f1.side();
    let n = set.side();
    let dim = set.dim();
    match set.mode() {
        BoundaryMode::Periodic => f1.values().iter().filter(|v| v.re <= threshold).count(),
        BoundaryMode::Truncate => {
            let mut rel = vec![0usize; dim];
            let mut count = 0;
            for idx in 0..set.box_volume() {
                unflatten(idx, n, &mut rel);
                let flat = rel.iter().fold(0usize, |acc, &u| acc * side + u);
                if f1.values()[flat].re <= threshold {
                    count += 1;
                }
            }
            count
        }
    }
}

/// Both branches of the single-λ dichotomy with the decomposition diagnostics.
pub fn dichotomy_report(
    set: &PointSet,
    lambda: u64,
    epsilon: f64,
    eta: f64,
    consts: &DichotomyConstants,
) -> Result<DichotomyReport> {
    let unpinned = unpinned_check(set, lambda, epsilon, 1)?;
    let p = prepare(set, lambda, eta, consts)?;
    let arcs = ArcSystem::annulus(p.q.clone(), eta, lambda)?;
    let (mass, freqs) = annulus_mass(&p.f_hat, set.len(), &arcs);
    let threshold_ii = consts.c_branch * epsilon;

    let sqrt_l = (lambda as f64).sqrt();
    let mut dec = Decomposition {
        l1: sqrt_l / eta.sqrt(),
        l2: eta * sqrt_l,
        exceptional_constant: consts.c_exceptional,
        ..Default::default()
    };
    let sphere = nonempty_sphere(set.dim(), lambda)?;
    let sigma = sphere_spectrum(&sphere, p.side, 1)?;
    let sv = sigma.values();
    let psi1 = match usable_q(&p.q, dec.l1) {
        Some(q) => Some(build_cutoff(set.dim(), q, dec.l1)?.spectrum(p.side)?),
        None => {
            dec.notes
                .push(format!("L1 = {} is below q_eta = {}", dec.l1, p.q));
            None
        }
    };
    let psi2 = match usable_q(&p.q, dec.l2) {
        Some(q) => Some(build_cutoff(set.dim(), q, dec.l2)?.spectrum(p.side)?),
        None => {
            dec.notes
                .push(format!("L2 = {} is below q_eta = {}", dec.l2, p.q));
            None
        }
    };
    if let Some(p1) = &psi1 {
        let pv = p1.values();
        dec.main_term = Some(real_pairing(&p.f_hat, |i| pv[i].re * sv[i].re));
        let f1_hat = p.f_hat.multiply(p1)?;
        let f1 = idft_like(&f1_hat, &p.f)?;
        dec.exceptional_size = Some(exceptional_size(
            set,
            &f1,
            p.density - consts.c_exceptional * eta,
        ));
    }
    if let Some(p2) = &psi2 {
        let qv = p2.values();
        dec.high_term = Some(real_pairing(&p.f_hat, |i| (1.0 - qv[i].re) * sv[i].re));
        let high_hat: Vec<Complex64> = p
            .f_hat
            .values()
            .iter()
            .zip(qv)
            .zip(sv)
            .map(|((&f, &q2), &s)| f * (1.0 - q2.re) * s.re)
            .collect();
        let n = high_hat.len() as f64;
        dec.high_norm = Some((high_hat.iter().map(|v| v.norm_sqr()).sum::<f64>() / n).sqrt());
        if let Some(p1) = &psi1 {
            let pv = p1.values();
            dec.middle_term = Some(real_pairing(&p.f_hat, |i| (qv[i].re - pv[i].re) * sv[i].re));
        }
    }

    Ok(DichotomyReport {
        kind: "single".into(),
        lambda0: lambda,
        lambda1: lambda,
        epsilon,
        eta,
        c_qeta: consts.c_qeta,
        q_eta: p.q.to_string(),
        grid_side: p.side,
        set_size: set.len(),
        density: p.density,
        branch_i: BranchI {
            best_x: unpinned.best_x,
            best_ratio: unpinned.best_ratio,
            threshold: unpinned.threshold,
            holds: unpinned.holds,
            witness: None,
            witness_ratios: Vec::new(),
        },
        branch_ii: BranchII {
            fourier_mass: mass,
            frequencies: freqs,
            threshold_form: "c*epsilon".into(),
            constant: consts.c_branch,
            threshold: threshold_ii,
            holds: mass >= threshold_ii,
        },
        decomposition: dec,
        window: window(eta, &p.q, lambda, lambda, set.side()),
    })
}

/// Both branches of the λ-window dichotomy with maximal-operator diagnostics.
pub fn dichotomy_report_pinned(
    set: &PointSet,
    lambda0: u64,
    lambda1: u64,
    epsilon: f64,
    eta: f64,
    consts: &DichotomyConstants,
) -> Result<DichotomyReport> {
    let pinned = pinned_check(set, lambda0, lambda1, epsilon, 1)?;
    let spheres = window_spheres(set.dim(), lambda0, lambda1)?;
    let (best, best_ratio) = par::argmax_indexed(set.len(), |i| {
        ratios_at(set, set.point(i), &spheres, 1)
            .iter()
            .map(|r| r.ratio)
            .fold(f64::INFINITY, f64::min)
    })
    .expect("nonempty set");
    let p = prepare(set, lambda1, eta, consts)?;
    let arcs = ArcSystem::annulus_pair(p.q.clone(), eta, lambda0.max(1), lambda1.max(1))?;
    let (mass, freqs) = annulus_mass(&p.f_hat, set.len(), &arcs);
    let threshold_ii = consts.c_branch * epsilon * epsilon;

    let mut dec = Decomposition {
        l1: (lambda1 as f64).sqrt() / eta.sqrt(),
        l2: eta * (lambda0 as f64).sqrt(),
        exceptional_constant: consts.c_exceptional,
        ..Default::default()
    };
    match usable_q(&p.q, dec.l1) {
        Some(q) => {
            let psi1 = build_cutoff(set.dim(), q, dec.l1)?.spectrum(p.side)?;
            let f1 = idft_like(&p.f_hat.multiply(&psi1)?, &p.f)?;
            dec.exceptional_size = Some(exceptional_size(
                set,
                &f1,
                p.density - consts.c_exceptional * eta,
            ));
            // 1_B − f₁ on the grid.
            let ones = GridFunction::indicator(
                &PointSet::full(set.dim(), set.side(), set.mode())?,
                p.side,
            )?;
            let complement =
                ones.lin_comb(Complex64::new(1.0, 0.0), &f1, Complex64::new(-1.0, 0.0))?;
            let max = maximal_average(&complement, lambda0, lambda1, 1)?;
            dec.maximal_complement_term = Some(p.f.inner(&max)?.re);
        }
        None => dec
            .notes
            .push(format!("L1 = {} is below q_eta = {}", dec.l1, p.q)),
    }
    match mollifier(eta, lambda0, consts.c_qeta) {
        Ok(_) => {
            let moll = mollified_maximal(&p.f, eta, lambda0, lambda1, consts.c_qeta)?;
            dec.mollified_term = Some(p.f.inner(&moll)?.re);
        }
        Err(e) => dec.notes.push(format!("mollified term unavailable: {e}")),
    }

    Ok(DichotomyReport {
        kind: "pinned".into(),
        lambda0,
        lambda1,
        epsilon,
        eta,
        c_qeta: consts.c_qeta,
        q_eta: p.q.to_string(),
        grid_side: p.side,
        set_size: set.len(),
        density: p.density,
        branch_i: BranchI {
            best_x: set.point(best).to_vec(),
            best_ratio,
            threshold: pinned.threshold,
            holds: best_ratio > pinned.threshold,
            witness: pinned.witness,
            witness_ratios: pinned.ratios,
        },
        branch_ii: BranchII {
            fourier_mass: mass,
            frequencies: freqs,
            threshold_form: "c*epsilon^2".into(),
            constant: consts.c_branch,
            threshold: threshold_ii,
            holds: mass >= threshold_ii,
        },
        decomposition: dec,
        window: window(eta, &p.q, lambda0, lambda1, set.side()),
    })
}

/// Annulus masses along a λ-ladder, with a full scan for overlaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub lambdas: Vec<u64>,
    pub masses: Vec<f64>,
    pub total_mass: f64,
    /// Grid frequencies lying in more than one annulus.
    pub overlapping_frequencies: usize,
    pub pairwise_disjoint: bool,
}

pub fn annulus_ladder(
    set: &PointSet,
    lambdas: &[u64],
    eta: f64,
    c_qeta: f64,
) -> Result<LadderReport> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let q = q_eta(eta, c_qeta)?;
    let lambda_max = lambdas.iter().copied().max().unwrap_or(1);
    let side = spectral_grid_side(set, lambda_max, 1);
    let f_hat = dft(&GridFunction::indicator(set, side)?);
    let systems = lambdas
        .iter()
        .map(|&l| ArcSystem::annulus(q.clone(), eta, l))
        .collect::<Result<Vec<_>>>()?;
    let dim = set.dim();
    let membership: Vec<Vec<bool>> = par::map_indexed(f_hat.values().len(), |idx| {
        let mut k = vec![0usize; dim];
        unflatten(idx, side, &mut k);
        systems.iter().map(|s| s.contains_grid(&k, side)).collect()
    });
    let masses: Vec<f64> = (0..systems.len())
        .map(|j| {
            real_pairing(&f_hat, |i| if membership[i][j] { 1.0 } else { 0.0 }) / set.len() as f64
        })
        .collect();
    let overlapping = membership
        .iter()
        .filter(|m| m.iter().filter(|&&b| b).count() > 1)
        .count();
    Ok(LadderReport {
        lambdas: lambdas.to_vec(),
        total_mass: masses.iter().sum(),
        masses,
        overlapping_frequencies: overlapping,
        pairwise_disjoint: overlapping == 0,
    })
}

#[cfg(test)]
mod tests;
