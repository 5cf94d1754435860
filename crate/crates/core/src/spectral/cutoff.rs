//! The smooth cutoff pair `ψ_{q,L}`, `χ_{q,L}`.
//!
//! `ψ̃(ξ) = (b*b)(|ξ|)/‖b‖₂²` where `b(r) = exp(−1/(1−4r²))` on `r < 1/2`.
//! Then `ψ̃(0) = 1`, `0 ≤ ψ̃ ≤ 1`, `ψ̃` vanishes outside the unit ball, and its
//! inverse transform is `ψ = b̌²/‖b‖₂² ≥ 0`. Both radial profiles are
//! tabulated once per dimension and interpolated.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{GridFunction, Spectrum};
use crate::density::{box_cells, unflatten, BoundaryMode};
use crate::error::{Error, Result};
use crate::par;
use crate::quad::{unit_sphere_area, Rule};

/// Sampling density of the radial tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TableResolution {
    /// Samples of `ψ̃` on `[0, 1]`.
    pub conv_samples: usize,
    /// Samples of `ψ` per unit radius.
    pub psi_steps_per_unit: usize,
    /// `ψ` is treated as zero beyond this radius.
    pub psi_radius: usize,
}

impl Default for TableResolution {
    fn default() -> Self {
        Self {
            conv_samples: 1024,
            psi_steps_per_unit: 256,
            psi_radius: 48,
        }
    }
}

#[derive(Debug)]
struct RadialTables {
    res: TableResolution,
    /// `ψ̃` at `s = j / conv_samples`.
    conv: Vec<f64>,
    /// `ψ` at `ρ = j / psi_steps_per_unit`.
    psi: Vec<f64>,
}

fn bump(r: f64) -> f64 {
    let u = 4.0 * r * r;
    if u >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u)).exp()
    }
}

type TableCache = Mutex<HashMap<(usize, TableResolution), Arc<RadialTables>>>;

fn tables(dim: usize, res: TableResolution) -> Arc<RadialTables> {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().expect("cutoff cache").get(&(dim, res)) {
        return t.clone();
    }
    let built = Arc::new(build_tables(dim, res));
    cache
        .lock()
        .expect("cutoff cache")
        .entry((dim, res))
        .or_insert(built)
        .clone()
}

fn build_tables(dim: usize, res: TableResolution) -> RadialTables {
    let unit64 = Rule::new(64, -1.0, 1.0);
    let raw = par::map_indexed(res.conv_samples + 1, |j| {
        self_convolution(dim, j as f64 / res.conv_samples as f64, &unit64)
    });
    let norm = raw[0];
    let conv: Vec<f64> = raw.iter().map(|&v| (v / norm).clamp(0.0, 1.0)).collect();

    // b̌(ρ) = 2∫_0^{1/2} P(t) cos(2πρt) dt with P the (d−1)-dimensional marginal.
    let outer = Rule::new(640, 0.0, 0.5);
    let unit96 = Rule::new(96, -1.0, 1.0);
    let marginal: Vec<f64> = outer
        .nodes
        .iter()
        .map(|&t| marginal(dim, t, &unit96))
        .collect();
    let n_psi = res.psi_radius * res.psi_steps_per_unit + 1;
    let psi = par::map_indexed(n_psi, |j| {
        let rho = j as f64 / res.psi_steps_per_unit as f64;
        let bcheck: f64 = outer
            .nodes
            .iter()
            .zip(&outer.weights)
            .zip(&marginal)
            .map(|((&t, &w), &p)| w * p * (2.0 * PI * rho * t).cos())
            .sum::<f64>()
            * 2.0;
        bcheck * bcheck / norm
    });
    RadialTables { res, conv, psi }
}

/// `∫_{ℝ^{d−1}} b(√(t² + |y|²)) dy`.
fn marginal(dim: usize, t: f64, unit: &Rule) -> f64 {
    if dim == 1 {
        return bump(t.abs());
    }
    let top = (0.25 - t * t).max(0.0).sqrt();
    if top == 0.0 {
        return 0.0;
    }
    let k = (dim - 2) as i32;
    unit_sphere_area((dim - 2) as u32)
        * unit.integrate_over(0.0, top, |s| bump((t * t + s * s).sqrt()) * s.powi(k))
}

/// `(b*b)(s)` for the radial bump in `ℝ^d`, `0 ≤ s ≤ 1`.
fn self_convolution(dim: usize, s: f64, unit: &Rule) -> f64 {
    if s >= 1.0 {
        return 0.0;
    }
    // Both factors are nonzero only for t ∈ (s − 1/2, 1/2); the binding
    // constraint switches at t = s/2.
    let pieces = [(s - 0.5, s / 2.0, true), (s / 2.0, 0.5, false)];
    let mut total = 0.0;
    for (a, b, far_is_shifted) in pieces {
        total += unit.integrate_over(a, b, |t| {
            if dim == 1 {
                return bump(t.abs()) * bump((t - s).abs());
            }
            let binding = if far_is_shifted { t - s } else { t };
            let top = (0.25 - binding * binding).max(0.0).sqrt();
            if top == 0.0 {
                return 0.0;
            }
            let k = (dim - 2) as i32;
            unit_sphere_area((dim - 2) as u32)
                * unit.integrate_over(0.0, top, |r| {
                    let r2 = r * r;
                    r.powi(k) * bump((t * t + r2).sqrt()) * bump(((t - s) * (t - s) + r2).sqrt())
                })
        });
    }
    total
}

/// Four-point Lagrange interpolation on a uniform grid with spacing `h`.
fn interp(table: &[f64], h: f64, x: f64) -> f64 {
    let u = x / h;
    let n = table.len();
    let i = (u.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let t = u - i as f64;
    let (y0, y1, y2, y3) = (table[i], table[i + 1], table[i + 2], table[i + 3]);
    let l0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0;
    let l1 = t * (t - 2.0) * (t - 3.0) / 2.0;
    let l2 = -t * (t - 1.0) * (t - 3.0) / 2.0;
    let l3 = t * (t - 1.0) * (t - 2.0) / 6.0;
    y0 * l0 + y1 * l1 + y2 * l2 + y3 * l3
}

/// `ψ_{q,L}` and its Fourier transform in dimension `d`.
#[derive(Debug, Clone)]
pub struct CutoffProfile {
    dim: usize,
    q: u64,
    l: f64,
    tables: Arc<RadialTables>,
}

/// Cutoff with the default table resolution.
pub fn build_cutoff(dim: usize, q: u64, l: f64) -> Result<CutoffProfile> {
    build_cutoff_with(dim, q, l, TableResolution::default())
}

pub fn build_cutoff_with(
    dim: usize,
    q: u64,
    l: f64,
    res: TableResolution,
) -> Result<CutoffProfile> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if q == 0 {
        return Err(Error::InvalidParameter("q must be >= 1".into()));
    }
    if !(l >= q as f64) {
        return Err(Error::DegenerateCutoff {
            l,
            q: q.to_string(),
        });
    }
    if res.conv_samples < 4 || res.psi_steps_per_unit < 1 || res.psi_radius < 1 {
        return Err(Error::InvalidParameter(
            "table resolution too coarse".into(),
        ));
    }
    Ok(CutoffProfile {
        dim,
        q,
        l,
        tables: tables(dim, res),
    })
}

impl CutoffProfile {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    /// `(q/L)^d`.
    pub fn normalization(&self) -> f64 {
        (self.q as f64 / self.l).powi(self.dim as i32)
    }

    /// Radial profile `ψ̃(r)`.
    pub fn psi_tilde(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= 1.0 {
            return 0.0;
        }
        let h = 1.0 / self.tables.res.conv_samples as f64;
        interp(&self.tables.conv, h, r).clamp(0.0, 1.0)
    }

    /// Radial profile `ψ(ρ)`, zero beyond the table radius.
    pub fn psi(&self, rho: f64) -> f64 {
        let rho = rho.abs();
        if rho >= self.tables.res.psi_radius as f64 {
            return 0.0;
        }
        let h = 1.0 / self.tables.res.psi_steps_per_unit as f64;
        interp(&self.tables.psi, h, rho).max(0.0)
    }

    /// Radius (lattice units) beyond which `ψ_{q,L}` is treated as zero.
    pub fn truncation_radius(&self) -> f64 {
        self.tables.res.psi_radius as f64 * self.l
    }

    /// `ψ_{q,L}(x) = (q/L)^d ψ(x/L)` on `(qℤ)^d`, zero elsewhere.
    pub fn space_value(&self, x: &[i64]) -> f64 {
        let q = self.q as i64;
        if x.iter().any(|&c| c % q != 0) {
            return 0.0;
        }
        let r = x
            .iter()
            .map(|&c| (c as f64) * (c as f64))
            .sum::<f64>()
            .sqrt();
        self.normalization() * self.psi(r / self.l)
    }

    /// `ψ̂_{q,L}(ξ) = Σ_ℓ ψ̃(L(ξ − ℓ/q))`.
    pub fn fourier(&self, xi: &[f64]) -> f64 {
        let q = self.q as f64;
        let reach = 1.0 / self.l;
        let ranges: Vec<(i64, i64)> = xi
            .iter()
            .map(|&x| {
                (
                    ((x - reach) * q).ceil() as i64,
                    ((x + reach) * q).floor() as i64,
                )
            })
            .collect();
        let mut total = 0.0;
        let mut ell: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        if ranges.iter().any(|r| r.0 > r.1) {
            return 0.0;
        }
        loop {
            let d2: f64 = xi
                .iter()
                .zip(&ell)
                .map(|(&x, &l)| {
                    let t = x - l as f64 / q;
                    t * t
                })
                .sum();
            total += self.psi_tilde(self.l * d2.sqrt());
            // Odometer over the candidate box.
            let mut axis = ell.len();
            loop {
                if axis == 0 {
                    return total;
                }
                axis -= 1;
                if ell[axis] < ranges[axis].1 {
                    ell[axis] += 1;
                    break;
                }
                ell[axis] = ranges[axis].0;
            }
        }
    }

    /// `ψ̂_{q,L}(k/M)` using exact residues `kq mod M`, so large `q` loses no
    /// precision.
    pub fn fourier_grid(&self, k: &[usize], side: usize) -> f64 {
        let m = side as i128;
        let q = self.q as i128;
        let scale = 1.0 / (self.q as f64 * side as f64);
        // Per axis, the two nearest centers sit at numerators r and r − M.
        let cands: Vec<[f64; 2]> = k
            .iter()
            .map(|&kk| {
                let r = (kk as i128 * q).rem_euclid(m);
                [r as f64 * scale, (r - m) as f64 * scale]
            })
            .collect();
        let dim = k.len();
        let mut total = 0.0;
        for mask in 0..(1usize << dim) {
            let d2: f64 = cands
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let t = c[(mask >> i) & 1];
                    t * t
                })
                .sum();
            let r = self.l * d2.sqrt();
            if r < 1.0 {
                total += self.psi_tilde(r);
            }
        }
        total
    }

    /// `ψ̂_{q,L}` sampled on the frequency grid of `ℤ_M^d`. The periodization
    /// of `ψ_{q,L}` onto `ℤ_M^d` has exactly these DFT values.
    pub fn spectrum(&self, side: usize) -> Result<Spectrum> {
        let cells = box_cells(self.dim, side)?;
        let dim = self.dim;
        let values = par::map_indexed(cells, |idx| {
            let mut k = vec![0usize; dim];
            unflatten(idx, side, &mut k);
            Complex64::new(self.fourier_grid(&k, side), 0.0)
        });
        Spectrum::from_values(dim, side, values)
    }

    /// `ψ_{q,L}` periodized onto `ℤ_M^d` by direct summation of its values
    /// within the truncation radius.
    pub fn periodized(&self, side: usize) -> Result<GridFunction> {
        let mut g = GridFunction::zeros(self.dim, side, BoundaryMode::Periodic)?;
        let reach = (self.truncation_radius() / self.q as f64).floor() as i64;
        self.for_each_point(reach, |x, v| {
            let idx = g.index_of(x);
            g.values_mut()[idx] += v;
        })?;
        Ok(g)
    }

    /// `Σ ψ_{q,L}(x)` over `x ∈ (qℤ)^d` with `lo ≤ |x| ≤ hi`.
    pub fn lattice_sum(&self, lo: f64, hi: f64) -> Result<f64> {
        let hi = hi.min(self.truncation_radius());
        if hi < lo {
            return Ok(0.0);
        }
        let reach = (hi / self.q as f64).floor() as i64;
        let mut total = 0.0;
        let (lo2, hi2) = (lo * lo, hi * hi);
        self.for_each_point(reach, |x, v| {
            let r2: f64 = x.iter().map(|&c| (c as f64) * (c as f64)).sum();
            if r2 >= lo2 && r2 <= hi2 {
                total += v;
            }
        })?;
        Ok(total)
    }

    /// `Σ_{|x| ≥ radius} ψ_{q,L}(x)`.
    pub fn tail_mass(&self, radius: f64) -> Result<f64> {
        self.lattice_sum(radius, f64::INFINITY)
    }

    fn for_each_point<F: FnMut(&[i64], f64)>(&self, reach: i64, mut f: F) -> Result<()> {
        let width = (2 * reach + 1) as usize;
        let cells = box_cells(self.dim, width)?;
        if cells > 200_000_000 {
            return Err(Error::Capacity {
                count: cells as u128,
                budget: 200_000_000,
            });
        }
        let q = self.q as i64;
        let mut digits = vec![0usize; self.dim];
        let mut x = vec![0i64; self.dim];
        for idx in 0..cells {
            unflatten(idx, width, &mut digits);
            for (xi, &u) in x.iter_mut().zip(&digits) {
                *xi = (u as i64 - reach) * q;
            }
            let v = self.space_value(&x);
            if v != 0.0 {
                f(&x, v);
            }
        }
        Ok(())
    }
}

/// A finitely supported kernel on `ℤ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    dim: usize,
    offsets: Vec<i64>,
    values: Vec<f64>,
}

impl Kernel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn offsets(&self) -> impl Iterator<Item = &[i64]> + '_ {
        self.offsets.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn value_at(&self, x: &[i64]) -> f64 {
        self.offsets()
            .zip(&self.values)
            .find(|(o, _)| *o == x)
            .map_or(0.0, |(_, &v)| v)
    }

    /// The kernel wrapped into `ℤ_M^d`.
    pub fn to_grid(&self, side: usize, mode: BoundaryMode) -> Result<GridFunction> {
        let mut g = GridFunction::zeros(self.dim, side, mode)?;
        for (o, &v) in self.offsets().zip(&self.values) {
            let idx = g.index_of(o);
            g.values_mut()[idx] += v;
        }
        Ok(g)
    }
}

/// `χ_{q,L} = (q/L)^d` on `(qℤ)^d ∩ [−L/2, L/2]^d`.
pub fn chi_builder(dim: usize, q: u64, l: f64) -> Result<Kernel> {
    if dim == 0 || q == 0 {
        return Err(Error::InvalidParameter("need d >= 1 and q >= 1".into()));
    }
    if !(l >= q as f64) {
        return Err(Error::DegenerateCutoff {
            l,
            q: q.to_string(),
        });
    }
    let h = (l / (2.0 * q as f64)).floor() as i64;
    let width = (2 * h + 1) as usize;
    let cells = box_cells(dim, width)?;
    let value = (q as f64 / l).powi(dim as i32);
    let mut offsets = Vec::with_capacity(cells * dim);
    let mut digits = vec![0usize; dim];
    for idx in 0..cells {
        unflatten(idx, width, &mut digits);
        offsets.extend(digits.iter().map(|&u| (u as i64 - h) * q as i64));
    }
    Ok(Kernel {
        dim,
        offsets,
        values: vec![value; cells],
    })
}

/// Result of [`cutoff_l1_comparison`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Comparison {
    /// `‖χ_{q,L} * ψ_{q,L₁} − ψ_{q,L₁}‖₁`.
    pub distance: f64,
    /// `L/L₁`.
    pub ratio: f64,
    /// `distance / ratio`.
    pub constant: f64,
}

/// Exact ℓ¹ distance between `χ_{q,L} * ψ_{q,L₁}` and `ψ_{q,L₁}` (up to the
/// truncation of `ψ`). Both live on `(qℤ)^d`, so the sum is taken on `ℤ^d`
/// after dividing all lengths by `q`; the box average `χ` is applied
/// separably along each axis.
///
/// `χ_{q,L}` has mass `((2⌊L/2q⌋+1)·q/L)^d`, which is 1 only for odd `L/q`;
/// otherwise the distance stays near the mass defect as `L₁` grows.
pub fn cutoff_l1_comparison(dim: usize, q: u64, l: f64, l1: f64) -> Result<L1Comparison> {
    if !(l1 >= l) {
        return Err(Error::InvalidParameter(format!(
            "need L1 >= L, got L = {l}, L1 = {l1}"
        )));
    }
    let psi = build_cutoff(dim, q, l1)?;
    chi_builder(dim, q, l)?;
    let a = l / q as f64;
    let b = l1 / q as f64;
    let h = (a / 2.0).floor() as i64;
    let reach = (psi.tables.res.psi_radius as f64 * b).ceil() as i64 + h;
    let width = (2 * reach + 1) as usize;
    let cells = box_cells(dim, width)?;
    if cells > 50_000_000 {
        return Err(Error::Capacity {
            count: cells as u128,
            budget: 50_000_000,
        });
    }
    let norm = b.powi(-(dim as i32));
    let base = par::map_indexed(cells, |idx| {
        let mut digits = vec![0usize; dim];
        unflatten(idx, width, &mut digits);
        let r2: f64 = digits
            .iter()
            .map(|&u| {
                let c = u as f64 - reach as f64;
                c * c
            })
            .sum();
        norm * psi.psi(r2.sqrt() / b)
    });
    let mut smoothed = base.clone();
    let mut stride = 1usize;
    for _ in 0..dim {
        smoothed = window_sum(&smoothed, width, stride, h as usize);
        stride *= width;
    }
    let chi_value = a.powi(-(dim as i32));
    let distance = par::sum_indexed(cells, |i| (chi_value * smoothed[i] - base[i]).abs());
    let ratio = l / l1;
    Ok(L1Comparison {
        distance,
        ratio,
        constant: distance / ratio,
    })
}

/// Sum over the window `[i − h, i + h]` along the axis with the given stride;
/// cells beyond the edge count as zero.
fn window_sum(values: &[f64], width: usize, stride: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    let lines = values.len() / width;
    let mut prefix = vec![0.0; width + 1];
    for line in 0..lines {
        let base = (line / stride) * width * stride + line % stride;
        for j in 0..width {
            prefix[j + 1] = prefix[j] + values[base + j * stride];
        }
        for j in 0..width {
            let lo = j.saturating_sub(h);
            let hi = (j + h + 1).min(width);
            out[base + j * stride] = prefix[hi] - prefix[lo];
        }
    }
    out
}
