//! Integer points on spheres `S_λ = {x ∈ ℤ^d : |x|² = λ}`.

use serde::{Deserialize, Serialize};

use crate::density::{BoundaryMode, PointSet};
use crate::error::{Error, Result};
use crate::par;

/// Default cap on the number of points a single enumeration may materialize.
pub const DEFAULT_POINT_BUDGET: u64 = 10_000_000;

/// An integer d-vector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticePoint(Vec<i64>);

impl LatticePoint {
    pub fn new(coords: Vec<i64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter(
                "a lattice point needs d >= 1".into(),
            ));
        }
        Ok(Self(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0; dim.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn norm_sq(&self) -> u64 {
        norm_sq(&self.0)
    }
}

impl From<LatticePoint> for Vec<i64> {
    fn from(p: LatticePoint) -> Self {
        p.0
    }
}

pub(crate) fn norm_sq(x: &[i64]) -> u64 {
    x.iter().map(|&c| (c * c) as u64).sum()
}

/// Floor of the square root.
pub fn isqrt(n: u64) -> u64 {
    if n < 2 {
        return n;
    }
    let n = n as u128;
    let mut r = (n as f64).sqrt() as u128;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r as u64
}

/// The full set of lattice points of squared norm `lambda`, in lexicographic
/// order, stored as a flat row-major coordinate array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sphere {
    dim: usize,
    lambda: u64,
    coords: Vec<i64>,
}

impl Sphere {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> u64 {
        self.lambda
    }

    /// `|S_λ|`.
    pub fn count(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[i64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[i64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn to_lattice_points(&self) -> Vec<LatticePoint> {
        self.points().map(|p| LatticePoint(p.to_vec())).collect()
    }

    /// Largest absolute coordinate that can occur, `⌊√λ⌋`.
    pub fn radius_bound(&self) -> u64 {
        isqrt(self.lambda)
    }
}

fn validate(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    Ok(())
}

/// Enumerates `S_λ` with the default point budget.
pub fn enumerate_sphere(dim: usize, lambda: u64) -> Result<Sphere> {
    enumerate_sphere_with_budget(dim, lambda, DEFAULT_POINT_BUDGET)
}

/// Enumerates `S_λ` by recursive descent on coordinates, each coordinate
/// ranging over `|c| ≤ ⌊√remaining⌋` in increasing order.
pub fn enumerate_sphere_with_budget(dim: usize, lambda: u64, budget: u64) -> Result<Sphere> {
    validate(dim)?;
    let count = representation_count(dim, lambda)?;
    if count > budget as u128 {
        return Err(Error::Capacity { count, budget });
    }
    let r = isqrt(lambda) as i64;
    // One slice per value of the first coordinate, merged in order.
    let slices = par::map_indexed((2 * r + 1) as usize, |i| {
        let c = i as i64 - r;
        let rem = lambda - (c * c) as u64;
        let mut out = Vec::new();
        let mut prefix = Vec::with_capacity(dim);
        prefix.push(c);
        descend(dim, rem, &mut prefix, &mut out);
        out
    });
    let mut coords = Vec::with_capacity(count as usize * dim);
    for s in slices {
        coords.extend_from_slice(&s);
    }
    Ok(Sphere {
        dim,
        lambda,
        coords,
    })
}

fn descend(dim: usize, rem: u64, prefix: &mut Vec<i64>, out: &mut Vec<i64>) {
    let left = dim - prefix.len();
    if left == 0 {
        if rem == 0 {
            out.extend_from_slice(prefix);
        }
        return;
    }
    let r = isqrt(rem) as i64;
    if left == 1 {
        if (r * r) as u64 == rem {
            if r == 0 {
                prefix.push(0);
                out.extend_from_slice(prefix);
                prefix.pop();
            } else {
                for c in [-r, r] {
                    prefix.push(c);
                    out.extend_from_slice(prefix);
                    prefix.pop();
                }
            }
        }
        return;
    }
    for c in -r..=r {
        prefix.push(c);
        descend(dim, rem - (c * c) as u64, prefix, out);
        prefix.pop();
    }
}

/// `r_d(m)` for every `m ≤ lambda_max`, by the coordinate recursion
/// `r_k(m) = Σ_c r_{k-1}(m - c²)`.
pub fn representation_table(dim: usize, lambda_max: u64) -> Result<Vec<u128>> {
    validate(dim)?;
    let n = lambda_max as usize + 1;
    let mut cur = vec![0u128; n];
    cur[0] = 1;
    for _ in 0..dim {
        let mut next = vec![0u128; n];
        for (m, slot) in next.iter_mut().enumerate() {
            let mut acc = cur[m];
            let mut c = 1usize;
            while c * c <= m {
                acc += 2 * cur[m - c * c];
                c += 1;
            }
            *slot = acc;
        }
        cur = next;
    }
    Ok(cur)
}

/// `|S_λ|` without materializing the points.
pub fn representation_count(dim: usize, lambda: u64) -> Result<u128> {
    validate(dim)?;
    // Only the entries m = λ - c² of the last layer are needed.
    if lambda == 0 {
        return Ok(1);
    }
    if dim == 1 {
        let r = isqrt(lambda);
        return Ok(if r * r == lambda { 2 } else { 0 });
    }
    let prev = representation_table(dim - 1, lambda)?;
    let l = lambda as usize;
    let mut acc = prev[l];
    let mut c = 1usize;
    while c * c <= l {
        acc += 2 * prev[l - c * c];
        c += 1;
    }
    Ok(acc)
}

/// `|A ∩ (x + q·S_λ)|` under the set's boundary mode.
pub fn translated_intersection_count(
    set: &PointSet,
    x: &LatticePoint,
    sphere: &Sphere,
    q: u64,
) -> Result<usize> {
    if x.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            found: x.dim(),
        });
    }
    if sphere.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            found: sphere.dim(),
        });
    }
    if q == 0 {
        return Err(Error::InvalidParameter("q must be >= 1".into()));
    }
    Ok(count_translates(set, x.coords(), sphere, q as i64))
}

/// Core loop shared with the verifiers; assumes matching dimensions.
pub(crate) fn count_translates(set: &PointSet, x: &[i64], sphere: &Sphere, q: i64) -> usize {
    let n = set.side() as i64;
    let periodic = set.mode() == BoundaryMode::Periodic;
    let rel: Vec<i64> = x
        .iter()
        .zip(set.anchor())
        .map(|(&c, &a)| c - a - 1)
        .collect();
    let mask = set.mask();
    let mut count = 0usize;
    'points: for y in sphere.points() {
        let mut idx = 0usize;
        for (i, &yi) in y.iter().enumerate() {
            let mut c = rel[i] + q * yi;
            if periodic {
                c = c.rem_euclid(n);
            } else if c < 0 || c >= n {
                continue 'points;
            }
            idx = idx * n as usize + c as usize;
        }
        if mask[idx] {
            count += 1;
        }
    }
    count
}
