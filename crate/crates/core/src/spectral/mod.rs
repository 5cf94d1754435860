//! Fourier analysis on the finite groups `ℤ_M^d`.
//!
//! Conventions: the forward transform is `f̂(k/M) = Σ_x f(x) e^{−2πi x·k/M}`
//! (unnormalized) and the inverse carries the factor `M^{−d}`, so frequency
//! integrals over the torus become `M^{−d} Σ_k`.

mod cutoff;

pub use cutoff::{
    build_cutoff, build_cutoff_with, chi_builder, cutoff_l1_comparison, CutoffProfile, Kernel,
    L1Comparison, TableResolution,
};

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::density::{box_cells, unflatten, BoundaryMode, PointSet};
use crate::error::{Error, Result};
use crate::lattice::Sphere;
use crate::par;

/// Declared support of a truncate-mode grid: the box `{0,…,N−1}^d` at the
/// grid origin, with `pad` cells of zero padding guaranteed on every side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxSupport {
    pub side: usize,
    pub pad: usize,
}

/// A complex function on `ℤ_M^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    dim: usize,
    side: usize,
    mode: BoundaryMode,
    support: Option<BoxSupport>,
    values: Vec<Complex64>,
}

/// DFT values on the frequency grid `{k/M : k ∈ ℤ_M^d}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    dim: usize,
    side: usize,
    values: Vec<Complex64>,
}

fn check_grid(dim: usize, side: usize) -> Result<usize> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if side == 0 {
        return Err(Error::InvalidParameter("grid side must be >= 1".into()));
    }
    box_cells(dim, side)
}

impl GridFunction {
    pub fn zeros(dim: usize, side: usize, mode: BoundaryMode) -> Result<Self> {
        let cells = check_grid(dim, side)?;
        Ok(Self {
            dim,
            side,
            mode,
            support: None,
            values: vec![Complex64::new(0.0, 0.0); cells],
        })
    }

    pub fn from_values(
        dim: usize,
        side: usize,
        mode: BoundaryMode,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        let cells = check_grid(dim, side)?;
        if values.len() != cells {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a grid of {cells} cells",
                values.len()
            )));
        }
        Ok(Self {
            dim,
            side,
            mode,
            support: None,
            values,
        })
    }

    pub fn from_real(dim: usize, side: usize, mode: BoundaryMode, values: &[f64]) -> Result<Self> {
        Self::from_values(
            dim,
            side,
            mode,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    /// Evaluates `f` at every grid point (coordinates in `0..M`).
    pub fn from_fn<F>(dim: usize, side: usize, mode: BoundaryMode, f: F) -> Result<Self>
    where
        F: Fn(&[usize]) -> Complex64 + Sync + Send,
    {
        let cells = check_grid(dim, side)?;
        let values = par::map_indexed(cells, |idx| {
            let mut c = vec![0usize; dim];
            unflatten(idx, side, &mut c);
            f(&c)
        });
        Self::from_values(dim, side, mode, values)
    }

    pub fn constant(dim: usize, side: usize, mode: BoundaryMode, c: Complex64) -> Result<Self> {
        let cells = check_grid(dim, side)?;
        Self::from_values(dim, side, mode, vec![c; cells])
    }

    /// The point mass at the origin.
    pub fn delta(dim: usize, side: usize, mode: BoundaryMode) -> Result<Self> {
        let mut g = Self::zeros(dim, side, mode)?;
        g.values[0] = Complex64::new(1.0, 0.0);
        Ok(g)
    }

    /// `1_A` on a grid of side `grid_side`. Periodic sets need `grid_side = N`;
    /// truncate sets are placed at the grid origin and the padding
    /// `⌊(grid_side − N)/2⌋` is declared.
    pub fn indicator(set: &PointSet, grid_side: usize) -> Result<Self> {
        let n = set.side();
        let dim = set.dim();
        let mut g = Self::zeros(dim, grid_side, set.mode())?;
        match set.mode() {
            BoundaryMode::Periodic => {
                if grid_side != n {
                    return Err(Error::ShapeMismatch(format!(
                        "periodic set of side {n} on a grid of side {grid_side}"
                    )));
                }
                for (v, &m) in g.values.iter_mut().zip(set.mask()) {
                    *v = Complex64::new(m as u8 as f64, 0.0);
                }
            }
            BoundaryMode::Truncate => {
                if grid_side < n {
                    return Err(Error::Padding {
                        required: n,
                        available: grid_side,
                    });
                }
                let mut rel = vec![0usize; dim];
                for (idx, &m) in set.mask().iter().enumerate() {
                    if m {
                        unflatten(idx, n, &mut rel);
                        let flat = rel.iter().fold(0usize, |acc, &u| acc * grid_side + u);
                        g.values[flat] = Complex64::new(1.0, 0.0);
                    }
                }
                g.support = Some(BoxSupport {
                    side: n,
                    pad: (grid_side - n) / 2,
                });
            }
        }
        Ok(g)
    }

    /// Declares the box support `{0,…,N−1}^d` with the given padding;
    /// requires `M ≥ N + 2·pad` and no mass outside the box.
    pub fn with_support(mut self, side: usize, pad: usize) -> Result<Self> {
        let required = side + 2 * pad;
        if self.side < required {
            return Err(Error::Padding {
                required,
                available: self.side,
            });
        }
        let mut c = vec![0usize; self.dim];
        for (idx, v) in self.values.iter().enumerate() {
            unflatten(idx, self.side, &mut c);
            if c.iter().any(|&u| u >= side) && v.norm_sqr() != 0.0 {
                return Err(Error::ShapeMismatch(format!(
                    "grid function has mass at {c:?}, outside the declared box of side {side}"
                )));
            }
        }
        self.support = Some(BoxSupport { side, pad });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn support(&self) -> Option<BoxSupport> {
        self.support
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Flat index of a grid point; coordinates are reduced mod `M`.
    pub fn index_of(&self, coords: &[i64]) -> usize {
        let m = self.side as i64;
        coords
            .iter()
            .fold(0usize, |acc, &c| acc * self.side + c.rem_euclid(m) as usize)
    }

    pub fn at(&self, coords: &[i64]) -> Complex64 {
        self.values[self.index_of(coords)]
    }

    /// Same shape and descriptors, new values.
    pub fn with_values(&self, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                self.values.len()
            )));
        }
        Ok(Self {
            values,
            ..self.clone_shape()
        })
    }

    fn clone_shape(&self) -> Self {
        Self {
            dim: self.dim,
            side: self.side,
            mode: self.mode,
            support: self.support,
            values: Vec::new(),
        }
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.side != other.side {
            return Err(Error::ShapeMismatch(format!(
                "grids ℤ_{}^{} and ℤ_{}^{}",
                self.side, self.dim, other.side, other.dim
            )));
        }
        Ok(())
    }

    /// `Σ_x f(x) conj(g(x))`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.check_same_shape(other)?;
        Ok(par::sum_indexed(self.values.len(), |i| {
            self.values[i] * other.values[i].conj()
        }))
    }

    pub fn norm_l2(&self) -> f64 {
        par::sum_indexed(self.values.len(), |i| self.values[i].norm_sqr()).sqrt()
    }

    pub fn sum(&self) -> Complex64 {
        par::sum_indexed(self.values.len(), |i| self.values[i])
    }

    /// `α·self + β·other`.
    pub fn lin_comb(&self, alpha: Complex64, other: &Self, beta: Complex64) -> Result<Self> {
        self.check_same_shape(other)?;
        let values = par::map_indexed(self.values.len(), |i| {
            alpha * self.values[i] + beta * other.values[i]
        });
        self.with_values(values)
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(Complex64) -> Complex64 + Sync + Send,
    {
        let values = par::map_indexed(self.values.len(), |i| f(self.values[i]));
        Self {
            values,
            ..self.clone_shape()
        }
    }

    /// Text dump: a version line, then `d M mode` (plus `N pad` when a box
    /// support is declared), then one `re im` pair per line in row-major
    /// order.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "latdist-grid v1")?;
        match self.support {
            Some(s) => writeln!(
                w,
                "{} {} {} {} {}",
                self.dim, self.side, self.mode, s.side, s.pad
            )?,
            None => writeln!(w, "{} {} {}", self.dim, self.side, self.mode)?,
        }
        for v in &self.values {
            writeln!(w, "{:e} {:e}", v.re, v.im)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |lineno: usize| -> Result<String> {
            lines.next().transpose()?.ok_or_else(|| Error::Parse {
                line: lineno,
                msg: "unexpected end of input".into(),
            })
        };
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let version = next(1)?;
        if version.trim() != "latdist-grid v1" {
            return Err(perr(1, format!("unsupported grid header {version:?}")));
        }
        let header = next(2)?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 3 && toks.len() != 5 {
            return Err(perr(2, "expected `d M mode [N pad]`".into()));
        }
        let num = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| perr(2, format!("bad integer {t:?}")))
        };
        let dim = num(toks[0])?;
        let side = num(toks[1])?;
        let mode: BoundaryMode = toks[2].parse().map_err(|e: Error| perr(2, e.to_string()))?;
        let mut g = Self::zeros(dim, side, mode).map_err(|e| perr(2, e.to_string()))?;
        for i in 0..g.values.len() {
            let lineno = i + 3;
            let line = next(lineno)?;
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(re)), Some(Ok(im)), None) => g.values[i] = Complex64::new(re, im),
                _ => return Err(perr(lineno, format!("expected `re im`, got {line:?}"))),
            }
        }
        if toks.len() == 5 {
            let (n, pad) = (num(toks[3])?, num(toks[4])?);
            g = g.with_support(n, pad).map_err(|e| perr(2, e.to_string()))?;
        }
        Ok(g)
    }
}

impl Spectrum {
    pub fn from_values(dim: usize, side: usize, values: Vec<Complex64>) -> Result<Self> {
        let cells = check_grid(dim, side)?;
        if values.len() != cells {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a grid of {cells} cells",
                values.len()
            )));
        }
        Ok(Self { dim, side, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// The frequency `k/M ∈ [0,1)^d` of a flat index.
    pub fn frequency(&self, idx: usize) -> Vec<f64> {
        let mut k = vec![0usize; self.dim];
        unflatten(idx, self.side, &mut k);
        k.iter().map(|&v| v as f64 / self.side as f64).collect()
    }

    /// Pointwise product with another spectrum (convolution on the space side).
    pub fn multiply(&self, other: &Spectrum) -> Result<Spectrum> {
        if self.dim != other.dim || self.side != other.side {
            return Err(Error::ShapeMismatch("spectra on different grids".into()));
        }
        let values = par::map_indexed(self.values.len(), |i| self.values[i] * other.values[i]);
        Ok(Spectrum {
            dim: self.dim,
            side: self.side,
            values,
        })
    }
}

/// Forward DFT.
pub fn dft(f: &GridFunction) -> Spectrum {
    let mut values = f.values.clone();
    fft_nd(&mut values, f.dim, f.side, false);
    Spectrum {
        dim: f.dim,
        side: f.side,
        values,
    }
}

/// Inverse DFT with the `M^{−d}` factor.
pub fn idft(spec: &Spectrum, mode: BoundaryMode) -> GridFunction {
    GridFunction {
        dim: spec.dim,
        side: spec.side,
        mode,
        support: None,
        values: idft_values(spec),
    }
}

/// Inverse DFT keeping the shape descriptors of `like`.
pub fn idft_like(spec: &Spectrum, like: &GridFunction) -> Result<GridFunction> {
    if spec.dim != like.dim || spec.side != like.side {
        return Err(Error::ShapeMismatch(
            "spectrum and template grid differ".into(),
        ));
    }
    like.with_values(idft_values(spec))
}

fn idft_values(spec: &Spectrum) -> Vec<Complex64> {
    let mut values = spec.values.clone();
    fft_nd(&mut values, spec.dim, spec.side, true);
    let scale = (spec.side as f64).powi(spec.dim as i32).recip();
    for v in &mut values {
        *v *= scale;
    }
    values
}

/// Lines gathered per batch when transforming a strided axis.
const LINE_BATCH: usize = 4096;

fn fft_nd(values: &mut [Complex64], dim: usize, m: usize, inverse: bool) {
    if m == 1 {
        return;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(m)
    } else {
        planner.plan_fft_forward(m)
    };
    for axis in 0..dim {
        let stride = m.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            par::for_each_chunk_mut(values, m, |_, line| fft.process(line));
        } else {
            transform_strided(values, m, stride, &*fft);
        }
    }
}

fn transform_strided(values: &mut [Complex64], m: usize, stride: usize, fft: &dyn Fft<f64>) {
    let n_lines = values.len() / m;
    let base_of = |line: usize| (line / stride) * m * stride + line % stride;
    let mut start = 0;
    while start < n_lines {
        let count = LINE_BATCH.min(n_lines - start);
        let data: &[Complex64] = values;
        let lines = par::map_indexed(count, |i| {
            let base = base_of(start + i);
            let mut buf: Vec<Complex64> = (0..m).map(|j| data[base + j * stride]).collect();
            fft.process(&mut buf);
            buf
        });
        for (i, buf) in lines.into_iter().enumerate() {
            let base = base_of(start + i);
            for (j, v) in buf.into_iter().enumerate() {
                values[base + j * stride] = v;
            }
        }
        start += count;
    }
}

/// Direct `O(M^{2d})` DFT; reference implementation for cross-checks.
pub fn dft_naive(f: &GridFunction) -> Spectrum {
    let (dim, m) = (f.dim, f.side);
    let n = f.values.len();
    let values = par::map_indexed(n, |k_idx| {
        let mut k = vec![0usize; dim];
        unflatten(k_idx, m, &mut k);
        let mut x = vec![0usize; dim];
        let mut acc = Complex64::new(0.0, 0.0);
        for (x_idx, &v) in f.values.iter().enumerate() {
            unflatten(x_idx, m, &mut x);
            let dot: usize = x.iter().zip(&k).map(|(&a, &b)| a * b).sum::<usize>() % m;
            acc += v * unit_phase(-(dot as f64) / m as f64);
        }
        acc
    });
    Spectrum {
        dim,
        side: m,
        values,
    }
}

/// `e^{2πi t}` evaluated after reducing `t` to `[−1/2, 1/2]`.
pub fn unit_phase(t: f64) -> Complex64 {
    let r = t - t.round();
    let (s, c) = (2.0 * std::f64::consts::PI * r).sin_cos();
    Complex64::new(c, s)
}

/// `|⟨f,g⟩ − M^{−d}⟨f̂,ĝ⟩|`.
pub fn parseval_check(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    f.check_same_shape(g)?;
    let space = f.inner(g)?;
    let (ff, gg) = (dft(f), dft(g));
    let n = ff.values.len();
    let freq: Complex64 = par::sum_indexed(n, |i| ff.values[i] * gg.values[i].conj());
    let freq = freq / n as f64;
    Ok((space - freq).norm())
}

/// `σ̂_λ(ξ) = |S_λ|^{−1} Σ_{x∈S_λ} e^{−2πi x·ξ}` by direct summation.
pub fn sigma_hat(sphere: &Sphere, xi: &[f64]) -> Result<Complex64> {
    check_sphere(sphere, xi.len())?;
    let n = sphere.count();
    let total: Complex64 = par::sum_indexed(n, |i| {
        let dot: f64 = sphere
            .point(i)
            .iter()
            .zip(xi)
            .map(|(&a, &b)| a as f64 * b)
            .sum();
        unit_phase(-dot)
    });
    Ok(total / n as f64)
}

fn check_sphere(sphere: &Sphere, dim: usize) -> Result<()> {
    if sphere.is_empty() {
        return Err(Error::EmptySphere {
            dim: sphere.dim(),
            lambda: sphere.lambda(),
        });
    }
    if dim != sphere.dim() {
        return Err(Error::DimensionMismatch {
            expected: sphere.dim(),
            found: dim,
        });
    }
    Ok(())
}

/// Spectrum of the normalized measure on `q·S_λ` wrapped into `ℤ_M^d`; its
/// value at `k/M` equals `σ̂_λ(qk/M)` exactly.
pub fn sphere_spectrum(sphere: &Sphere, side: usize, q: u64) -> Result<Spectrum> {
    check_sphere(sphere, sphere.dim())?;
    let mut g = GridFunction::zeros(sphere.dim(), side, BoundaryMode::Periodic)?;
    let w = 1.0 / sphere.count() as f64;
    let q = q as i64;
    let mut scaled = vec![0i64; sphere.dim()];
    for y in sphere.points() {
        for (s, &c) in scaled.iter_mut().zip(y) {
            *s = q * c;
        }
        let idx = g.index_of(&scaled);
        g.values[idx] += w;
    }
    Ok(dft(&g))
}

/// `σ̂_λ(ξ)` by dynamic programming over coordinates, without enumerating the
/// sphere: `F_k(n) = Σ_{c² ≤ n} F_{k−1}(n − c²) e^{−2πi c ξ_k}`, cost
/// `O(d·λ^{3/2})`. `count` is `|S_λ|`.
pub fn sigma_hat_by_coordinates(
    dim: usize,
    lambda: u64,
    count: u128,
    xi: &[f64],
) -> Result<Complex64> {
    if count == 0 {
        return Err(Error::EmptySphere { dim, lambda });
    }
    if xi.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: xi.len(),
        });
    }
    let lam = lambda as usize;
    let zero = Complex64::new(0.0, 0.0);
    let mut prev = vec![zero; lam + 1];
    prev[0] = Complex64::new(1.0, 0.0);
    let mut next = vec![zero; lam + 1];
    let cmax = crate::lattice::isqrt(lambda) as usize;
    let mut phases = Vec::with_capacity(cmax + 1);
    // Only F_d(λ) is needed, so the last layer evaluates one entry.
    for (k, &x) in xi.iter().enumerate() {
        phases.clear();
        // e(−cξ) + e(cξ) for c ≥ 1; the c = 0 term counts once.
        phases.push(Complex64::new(1.0, 0.0));
        for c in 1..=cmax {
            let p = unit_phase(-(c as f64) * x);
            phases.push(p + p.conj());
        }
        let last = k + 1 == dim;
        let range = if last { lam..lam + 1 } else { 0..lam + 1 };
        for n in range {
            let mut acc = zero;
            let mut c = 0usize;
            while c * c <= n {
                acc += prev[n - c * c] * phases[c];
                c += 1;
            }
            next[n] = acc;
        }
        std::mem::swap(&mut prev, &mut next);
    }
    Ok(prev[lam] / count as f64)
}
