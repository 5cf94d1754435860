//! Finite point sets in a box, residue-class statistics, uniform-distribution
//! tests and the density-increment loop.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arith::q_eta;
use crate::error::{Error, Result};
use crate::lattice::LatticePoint;

/// How coordinates outside the box are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// The box is identified with the torus `ℤ_N^d`.
    Periodic,
    /// Points leaving the box are absent.
    Truncate,
}

impl fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryMode::Periodic => "periodic",
            BoundaryMode::Truncate => "truncate",
        })
    }
}

impl FromStr for BoundaryMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(BoundaryMode::Periodic),
            "truncate" => Ok(BoundaryMode::Truncate),
            other => Err(Error::InvalidParameter(format!(
                "unknown boundary mode {other:?} (expected periodic or truncate)"
            ))),
        }
    }
}

/// A finite set `A ⊆ anchor + {1,…,N}^d`.
///
/// Membership is kept as a row-major mask over relative coordinates
/// `u = p − anchor − 1 ∈ {0,…,N−1}^d`; the element list is in lexicographic
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointSet {
    dim: usize,
    anchor: Vec<i64>,
    side: usize,
    mode: BoundaryMode,
    mask: Vec<bool>,
    coords: Vec<i64>,
}

impl PointSet {
    /// Builds a set from a membership mask over the box.
    pub fn from_mask(
        dim: usize,
        anchor: Vec<i64>,
        side: usize,
        mode: BoundaryMode,
        mask: Vec<bool>,
    ) -> Result<Self> {
        check_box(dim, &anchor, side)?;
        let cells = box_cells(dim, side)?;
        if mask.len() != cells {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} cells, box has {cells}",
                mask.len()
            )));
        }
        let mut coords = Vec::new();
        let mut rel = vec![0usize; dim];
        for (idx, &m) in mask.iter().enumerate() {
            if m {
                unflatten(idx, side, &mut rel);
                coords.extend(rel.iter().zip(&anchor).map(|(&u, &a)| a + 1 + u as i64));
            }
        }
        Ok(Self {
            dim,
            anchor,
            side,
            mode,
            mask,
            coords,
        })
    }

    /// Builds a set from explicit points; rejects duplicates and points
    /// outside the box.
    pub fn from_points<I>(
        dim: usize,
        anchor: Vec<i64>,
        side: usize,
        mode: BoundaryMode,
        points: I,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<i64>>,
    {
        check_box(dim, &anchor, side)?;
        let mut mask = vec![false; box_cells(dim, side)?];
        for p in points {
            let idx = locate(dim, &anchor, side, &p).ok_or_else(|| {
                Error::InvalidParameter(format!("point {p:?} lies outside the box"))
            })?;
            if std::mem::replace(&mut mask[idx], true) {
                return Err(Error::InvalidParameter(format!("duplicate point {p:?}")));
            }
        }
        Self::from_mask(dim, anchor, side, mode, mask)
    }

    pub fn full(dim: usize, side: usize, mode: BoundaryMode) -> Result<Self> {
        let cells = box_cells(dim, side)?;
        Self::from_mask(dim, vec![0; dim], side, mode, vec![true; cells])
    }

    pub fn empty(dim: usize, side: usize, mode: BoundaryMode) -> Result<Self> {
        let cells = box_cells(dim, side)?;
        Self::from_mask(dim, vec![0; dim], side, mode, vec![false; cells])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn anchor(&self) -> &[i64] {
        &self.anchor
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn with_mode(mut self, mode: BoundaryMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Number of cells of the box, `N^d`.
    pub fn box_volume(&self) -> usize {
        self.mask.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// The i-th element in lexicographic order.
    pub fn point(&self, i: usize) -> &[i64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[i64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn contains(&self, p: &[i64]) -> bool {
        locate(self.dim, &self.anchor, self.side, p).is_some_and(|i| self.mask[i])
    }

    pub fn to_lattice_points(&self) -> Vec<LatticePoint> {
        self.points()
            .map(|p| LatticePoint::new(p.to_vec()).expect("dim >= 1"))
            .collect()
    }

    /// Relative 0-based coordinates of an absolute point.
    pub fn relative(&self, p: &[i64]) -> Vec<i64> {
        p.iter()
            .zip(&self.anchor)
            .map(|(&c, &a)| c - a - 1)
            .collect()
    }

    /// Writes the text format: a header line `d N anchor_1 … anchor_d mode`
    /// followed by one point per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = format!("{} {}", self.dim, self.side);
        for a in &self.anchor {
            header.push_str(&format!(" {a}"));
        }
        writeln!(w, "{header} {}", self.mode)?;
        for p in self.points() {
            let line: Vec<String> = p.iter().map(|c| c.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Strict parser for the text format. Blank lines are skipped; every
    /// other problem is reported with its 1-based line number.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (dim, side, anchor, mode) = loop {
            let Some((i, line)) = lines.next() else {
                return Err(Error::Parse {
                    line: 1,
                    msg: "missing header".into(),
                });
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            break parse_header(&line).map_err(|msg| Error::Parse { line: i + 1, msg })?;
        };
        let mut mask = vec![
            false;
            box_cells(dim, side).map_err(|e| Error::Parse {
                line: 1,
                msg: e.to_string(),
            })?
        ];
        let mut first_seen = std::collections::HashMap::new();
        for (i, line) in lines {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let p: Vec<i64> = line
                .split_whitespace()
                .map(|t| t.parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: lineno,
                    msg: format!("bad integer: {e}"),
                })?;
            if p.len() != dim {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {dim} coordinates, found {}", p.len()),
                });
            }
            let idx = locate(dim, &anchor, side, &p).ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("point {p:?} lies outside the box"),
            })?;
            if mask[idx] {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!(
                        "duplicate point {p:?} (first seen on line {})",
                        first_seen[&idx]
                    ),
                });
            }
            mask[idx] = true;
            first_seen.insert(idx, lineno);
        }
        Self::from_mask(dim, anchor, side, mode, mask)
    }
}

fn parse_header(line: &str) -> std::result::Result<(usize, usize, Vec<i64>, BoundaryMode), String> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() < 3 {
        return Err("header must read `d N anchor_1 … anchor_d mode`".into());
    }
    let dim: usize = toks[0]
        .parse()
        .map_err(|_| format!("bad dimension {:?}", toks[0]))?;
    if dim == 0 {
        return Err("dimension must be >= 1".into());
    }
    if toks.len() != dim + 3 {
        return Err(format!(
            "header for d = {dim} needs {} fields, found {}",
            dim + 3,
            toks.len()
        ));
    }
    let side: usize = toks[1]
        .parse()
        .map_err(|_| format!("bad side {:?}", toks[1]))?;
    if side == 0 {
        return Err("side must be >= 1".into());
    }
    let anchor = toks[2..2 + dim]
        .iter()
        .map(|t| {
            t.parse::<i64>()
                .map_err(|_| format!("bad anchor coordinate {t:?}"))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mode = toks[2 + dim]
        .parse::<BoundaryMode>()
        .map_err(|e| e.to_string())?;
    Ok((dim, side, anchor, mode))
}

fn check_box(dim: usize, anchor: &[i64], side: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if side == 0 {
        return Err(Error::InvalidParameter("box side must be >= 1".into()));
    }
    if anchor.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: anchor.len(),
        });
    }
    Ok(())
}

pub(crate) fn box_cells(dim: usize, side: usize) -> Result<usize> {
    side.checked_pow(dim as u32)
        .filter(|&c| c <= 1 << 32)
        .ok_or_else(|| Error::InvalidParameter(format!("box {side}^{dim} is too large")))
}

fn locate(dim: usize, anchor: &[i64], side: usize, p: &[i64]) -> Option<usize> {
    if p.len() != dim {
        return None;
    }
    let mut idx = 0usize;
    for (&c, &a) in p.iter().zip(anchor) {
        let u = c - a - 1;
        if u < 0 || u >= side as i64 {
            return None;
        }
        idx = idx * side + u as usize;
    }
    Some(idx)
}

pub(crate) fn unflatten(mut idx: usize, side: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = idx % side;
        idx /= side;
    }
}

/// `|A| / N^d`.
pub fn box_density(set: &PointSet) -> f64 {
    set.len() as f64 / set.box_volume() as f64
}

// ---------------------------------------------------------------------------
// Generators

/// Recipe for a generated point set.
#[derive(Debug, Clone, PartialEq)]
pub enum SetSpec {
    /// Each cell independently with probability `p`, from a seeded stream.
    Bernoulli {
        p: f64,
        seed: u64,
    },
    /// `(shift + rℤ^d) ∩ box`.
    Congruence {
        r: u64,
        shift: i64,
    },
    Full,
    Empty,
    Union(Vec<SetSpec>),
    Complement(Box<SetSpec>),
}

/// Materializes `spec` on the box `{1,…,N}^d`.
pub fn generate_set(
    spec: &SetSpec,
    dim: usize,
    side: usize,
    mode: BoundaryMode,
) -> Result<PointSet> {
    let mask = generate_mask(spec, dim, side)?;
    PointSet::from_mask(dim, vec![0; dim], side, mode, mask)
}

fn generate_mask(spec: &SetSpec, dim: usize, side: usize) -> Result<Vec<bool>> {
    let cells = box_cells(dim, side)?;
    Ok(match spec {
        SetSpec::Bernoulli { p, seed } => {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidParameter(format!(
                    "bernoulli p = {p} not in [0, 1]"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..cells).map(|_| rng.random::<f64>() < *p).collect()
        }
        SetSpec::Congruence { r, shift } => {
            if *r == 0 {
                return Err(Error::InvalidParameter(
                    "congruence modulus must be >= 1".into(),
                ));
            }
            let r = *r as i64;
            let mut rel = vec![0usize; dim];
            (0..cells)
                .map(|idx| {
                    unflatten(idx, side, &mut rel);
                    rel.iter()
                        .all(|&u| (u as i64 + 1 - shift).rem_euclid(r) == 0)
                })
                .collect()
        }
        SetSpec::Full => vec![true; cells],
        SetSpec::Empty => vec![false; cells],
        SetSpec::Union(parts) => {
            let mut acc = vec![false; cells];
            for part in parts {
                for (a, b) in acc.iter_mut().zip(generate_mask(part, dim, side)?) {
                    *a |= b;
                }
            }
            acc
        }
        SetSpec::Complement(inner) => generate_mask(inner, dim, side)?
            .into_iter()
            .map(|b| !b)
            .collect(),
    })
}

impl fmt::Display for SetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetSpec::Bernoulli { p, seed } => write!(f, "bernoulli:p={p},seed={seed}"),
            SetSpec::Congruence { r, shift } => write!(f, "congruence:r={r},shift={shift}"),
            SetSpec::Full => f.write_str("full"),
            SetSpec::Empty => f.write_str("empty"),
            SetSpec::Union(parts) => {
                f.write_str("union(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{p}")?;
                }
                f.write_str(")")
            }
            SetSpec::Complement(inner) => write!(f, "complement({inner})"),
        }
    }
}

impl FromStr for SetSpec {
    type Err = Error;

    /// Grammar: `bernoulli:p=0.3,seed=7`, `congruence:r=2,shift=0`, `full`,
    /// `empty`, `union(spec;spec;…)`, `complement(spec)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |msg: String| Error::InvalidParameter(format!("generator spec {s:?}: {msg}"));
        if let Some(body) = strip_call(s, "union") {
            let parts = split_top_level(body, ';')
                .into_iter()
                .map(str::parse)
                .collect::<Result<Vec<_>>>()?;
            if parts.is_empty() {
                return Err(bad("union needs at least one part".into()));
            }
            return Ok(SetSpec::Union(parts));
        }
        if let Some(body) = strip_call(s, "complement") {
            return Ok(SetSpec::Complement(Box::new(body.parse()?)));
        }
        let (name, params) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = std::collections::BTreeMap::new();
        for item in params.split(',').filter(|t| !t.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {item:?}")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let take = |kv: &mut std::collections::BTreeMap<String, String>, key: &str| kv.remove(key);
        let spec = match name {
            "bernoulli" => {
                let p = take(&mut kv, "p")
                    .ok_or_else(|| bad("missing p".into()))?
                    .parse::<f64>()
                    .map_err(|e| bad(e.to_string()))?;
                let seed = take(&mut kv, "seed")
                    .map(|v| v.parse::<u64>().map_err(|e| bad(e.to_string())))
                    .transpose()?
                    .unwrap_or(0);
                SetSpec::Bernoulli { p, seed }
            }
            "congruence" => {
                let r = take(&mut kv, "r")
                    .ok_or_else(|| bad("missing r".into()))?
                    .parse::<u64>()
                    .map_err(|e| bad(e.to_string()))?;
                let shift = take(&mut kv, "shift")
                    .map(|v| v.parse::<i64>().map_err(|e| bad(e.to_string())))
                    .transpose()?
                    .unwrap_or(0);
                SetSpec::Congruence { r, shift }
            }
            "full" => SetSpec::Full,
            "empty" => SetSpec::Empty,
            other => return Err(bad(format!("unknown generator {other:?}"))),
        };
        if let Some(k) = kv.keys().next() {
            return Err(bad(format!("unexpected parameter {k:?}")));
        }
        Ok(spec)
    }
}

fn strip_call<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    s.strip_prefix(name)?
        .trim_start()
        .strip_prefix('(')?
        .strip_suffix(')')
}

fn split_top_level(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if !s[start..].trim().is_empty() {
        out.push(&s[start..]);
    }
    out
}

// ---------------------------------------------------------------------------
// Uniform distribution

/// Which uniformity notion to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum UniformityVariant {
    /// Every residue class of the whole box.
    Global,
    /// Every residue class inside each sub-cube of side `l` of the partition.
    Subcube { l: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcubeRow {
    /// 0-based position of the sub-cube in the partition grid.
    pub cube: Vec<usize>,
    pub worst_residue: Vec<u64>,
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub eta: f64,
    pub q_eta: u64,
    pub variant: UniformityVariant,
    pub global_density: f64,
    /// Residue `s ∈ {1,…,q}^d` attaining the worst ratio (smallest on ties).
    pub worst_residue: Vec<u64>,
    pub worst_ratio: f64,
    pub threshold: f64,
    pub subcubes: Vec<SubcubeRow>,
    pub passed: bool,
}

/// Uniformity test modulo `q_η = lcm{1 ≤ q ≤ Cη^{−2}}`.
pub fn uniformity_test(
    set: &PointSet,
    eta: f64,
    c_qeta: f64,
    variant: UniformityVariant,
) -> Result<UniformityReport> {
    let q = q_eta(eta, c_qeta)?;
    let q = q
        .to_u64()
        .filter(|&q| q as usize <= set.side())
        .ok_or_else(|| {
            Error::Divisibility(format!("q_eta = {q} does not divide N = {}", set.side()))
        })?;
    uniformity_test_modulus(set, q, eta, variant)
}

/// Uniformity test for an explicit modulus `q`.
pub fn uniformity_test_modulus(
    set: &PointSet,
    q: u64,
    eta: f64,
    variant: UniformityVariant,
) -> Result<UniformityReport> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eta = {eta} must be positive"
        )));
    }
    if q == 0 {
        return Err(Error::InvalidParameter("q must be >= 1".into()));
    }
    let n = set.side();
    let qs = q as usize;
    let l = match variant {
        UniformityVariant::Global => {
            if !n.is_multiple_of(qs) {
                return Err(Error::Divisibility(format!(
                    "q_eta = {q} does not divide N = {n}"
                )));
            }
            n
        }
        UniformityVariant::Subcube { l } => {
            if l == 0 || l % qs != 0 || !n.is_multiple_of(l) {
                return Err(Error::Divisibility(format!(
                    "need q_eta | L | N, got q_eta = {q}, L = {l}, N = {n}"
                )));
            }
            l
        }
    };
    let dim = set.dim();
    let cubes_per_axis = n / l;
    let n_cubes = box_cells(dim, cubes_per_axis)?;
    let n_classes = box_cells(dim, qs)?;
    let mut counts = vec![0u64; n_cubes * n_classes];
    let mut rel = vec![0usize; dim];
    for (idx, &m) in set.mask().iter().enumerate() {
        if !m {
            continue;
        }
        unflatten(idx, n, &mut rel);
        let (mut cube, mut class) = (0usize, 0usize);
        for &u in &rel {
            cube = cube * cubes_per_axis + u / l;
            class = class * qs + u % qs;
        }
        counts[cube * n_classes + class] += 1;
    }
    let global = box_density(set);
    let class_size = ((l / qs) as f64).powi(dim as i32);
    let threshold = 1.0 + eta * eta;
    let ratio_of = |c: u64| {
        if global == 0.0 {
            0.0
        } else {
            c as f64 / class_size / global
        }
    };

    let mut subcubes = Vec::with_capacity(n_cubes);
    let mut worst: Option<(usize, usize, f64)> = None;
    let mut digits = vec![0usize; dim];
    for cube in 0..n_cubes {
        let row = &counts[cube * n_classes..(cube + 1) * n_classes];
        let (best_class, best) =
            row.iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |acc, (k, &c)| {
                    let r = ratio_of(c);
                    if r > acc.1 {
                        (k, r)
                    } else {
                        acc
                    }
                });
        if worst.is_none_or(|(_, _, w)| best > w) {
            worst = Some((cube, best_class, best));
        }
        if matches!(variant, UniformityVariant::Subcube { .. }) {
            unflatten(cube, cubes_per_axis, &mut digits);
            subcubes.push(SubcubeRow {
                cube: digits.clone(),
                worst_residue: residue_of(best_class, qs, dim),
                worst_ratio: best,
            });
        }
    }
    let (_, class, worst_ratio) = worst.expect("at least one sub-cube");
    Ok(UniformityReport {
        eta,
        q_eta: q,
        variant,
        global_density: global,
        worst_residue: residue_of(class, qs, dim),
        worst_ratio,
        threshold,
        subcubes,
        passed: worst_ratio <= threshold,
    })
}

/// Class index → residue `s ∈ {1,…,q}^d`.
fn residue_of(class: usize, q: usize, dim: usize) -> Vec<u64> {
    let mut digits = vec![0usize; dim];
    unflatten(class, q, &mut digits);
    digits.into_iter().map(|v| v as u64 + 1).collect()
}

/// `|A ∩ (s + (qℤ)^d)|` for every residue class, indexed row-major by `s − 1`.
pub fn residue_class_counts(set: &PointSet, q: usize) -> Result<Vec<u64>> {
    if q == 0 {
        return Err(Error::InvalidParameter("q must be >= 1".into()));
    }
    let dim = set.dim();
    let mut counts = vec![0u64; box_cells(dim, q)?];
    let mut rel = vec![0usize; dim];
    for (idx, &m) in set.mask().iter().enumerate() {
        if m {
            unflatten(idx, set.side(), &mut rel);
            let class = rel.iter().fold(0usize, |acc, &u| acc * q + u % q);
            counts[class] += 1;
        }
    }
    Ok(counts)
}

// ---------------------------------------------------------------------------
// Density increment

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementStatus {
    Uniform,
    BoxExhausted,
    BudgetExhausted,
}

impl fmt::Display for IncrementStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IncrementStatus::Uniform => "uniform",
            IncrementStatus::BoxExhausted => "box exhausted",
            IncrementStatus::BudgetExhausted => "budget exhausted",
        })
    }
}

/// One set in the increment trace, with the class chosen to pass to the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementStep {
    pub step: usize,
    pub side: usize,
    pub size: usize,
    pub density: f64,
    pub worst_ratio: Option<f64>,
    pub chosen_residue: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementTrace {
    pub q_eta: u64,
    pub eta: f64,
    pub steps: Vec<IncrementStep>,
    pub status: IncrementStatus,
    pub final_set: PointSet,
}

impl IncrementTrace {
    /// Number of rescalings performed.
    pub fn increments(&self) -> usize {
        self.steps.len() - 1
    }
}

/// Upper bound `log(1/δ)/log(1+η²)` on the number of increments.
pub fn increment_step_bound(density: f64, eta: f64) -> f64 {
    if density <= 0.0 {
        return f64::INFINITY;
    }
    (1.0 / density).ln() / (1.0 + eta * eta).ln()
}

/// Density increment with `q_η` from `(eta, c_qeta)`.
pub fn density_increment(
    set: &PointSet,
    eta: f64,
    c_qeta: f64,
    max_steps: usize,
) -> Result<IncrementTrace> {
    let q = q_eta(eta, c_qeta)?;
    let q = q.to_u64().ok_or_else(|| {
        Error::Divisibility(format!("q_eta = {q} does not divide N = {}", set.side()))
    })?;
    density_increment_modulus(set, q, eta, max_steps)
}

/// Passes to the densest residue class and rescales until the set is
/// η-uniformly distributed modulo `q`, the box no longer divides, or
/// `max_steps` increments have been taken.
pub fn density_increment_modulus(
    set: &PointSet,
    q: u64,
    eta: f64,
    max_steps: usize,
) -> Result<IncrementTrace> {
    if q == 0 {
        return Err(Error::InvalidParameter("q must be >= 1".into()));
    }
    let mut current = set.clone();
    let mut steps = Vec::new();
    let status = loop {
        let density = box_density(&current);
        let mut entry = IncrementStep {
            step: steps.len(),
            side: current.side(),
            size: current.len(),
            density,
            worst_ratio: None,
            chosen_residue: None,
        };
        if current.len() == current.box_volume() {
            // A full box is uniformly distributed whatever the modulus.
            entry.worst_ratio = Some(1.0);
            steps.push(entry);
            break IncrementStatus::Uniform;
        }
        if !current.side().is_multiple_of(q as usize) {
            steps.push(entry);
            break IncrementStatus::BoxExhausted;
        }
        let report = uniformity_test_modulus(&current, q, eta, UniformityVariant::Global)?;
        entry.worst_ratio = Some(report.worst_ratio);
        if report.passed {
            steps.push(entry);
            break IncrementStatus::Uniform;
        }
        if steps.len() >= max_steps {
            steps.push(entry);
            break IncrementStatus::BudgetExhausted;
        }
        entry.chosen_residue = Some(report.worst_residue.clone());
        steps.push(entry);
        current = rescale_to_class(&current, q as usize, &report.worst_residue)?;
    };
    Ok(IncrementTrace {
        q_eta: q,
        eta,
        steps,
        status,
        final_set: current,
    })
}

/// `{k ∈ {1,…,N/q}^d : anchor + s + q(k − 1) ∈ A}`.
pub fn rescale_to_class(set: &PointSet, q: usize, residue: &[u64]) -> Result<PointSet> {
    let dim = set.dim();
    if residue.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: residue.len(),
        });
    }
    if q == 0 || !set.side().is_multiple_of(q) {
        return Err(Error::Divisibility(format!(
            "q = {q} does not divide N = {}",
            set.side()
        )));
    }
    let side = set.side() / q;
    let cells = box_cells(dim, side)?;
    let mut k = vec![0usize; dim];
    let mask = (0..cells)
        .map(|idx| {
            unflatten(idx, side, &mut k);
            let src = k.iter().zip(residue).fold(0usize, |acc, (&ki, &s)| {
                acc * set.side() + (s as usize - 1) + q * ki
            });
            set.mask()[src]
        })
        .collect();
    PointSet::from_mask(dim, vec![0; dim], side, set.mode(), mask)
}

// ---------------------------------------------------------------------------
// Sub-box density ladder

/// Largest density of `A` in any axis-parallel sub-box of the given side that
/// fits inside the box. A finite lower-bound proxy for upper Banach density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubBoxDensity {
    pub side: usize,
    pub max_density: f64,
    /// Absolute anchor of a maximizing sub-box (lexicographically smallest).
    pub anchor: Vec<i64>,
}

pub fn sub_box_density_ladder(set: &PointSet, sides: &[usize]) -> Result<Vec<SubBoxDensity>> {
    let dim = set.dim();
    let n = set.side();
    // Summed-volume table with a zero border: shape (n+1)^d.
    let m = n + 1;
    let cells = box_cells(dim, m)?;
    let mut table = vec![0u64; cells];
    let mut idx_n = vec![0usize; dim];
    for (idx, slot) in table.iter_mut().enumerate() {
        unflatten(idx, m, &mut idx_n);
        if idx_n.iter().all(|&v| v > 0) {
            let src = idx_n.iter().fold(0usize, |acc, &v| acc * n + (v - 1));
            *slot = set.mask()[src] as u64;
        }
    }
    let mut stride = 1usize;
    for axis in (0..dim).rev() {
        for idx in 0..cells {
            let coord = (idx / stride) % m;
            if coord > 0 {
                table[idx] += table[idx - stride];
            }
        }
        let _ = axis;
        stride *= m;
    }
    let mut out = Vec::new();
    for &s in sides {
        if s == 0 || s > n {
            return Err(Error::InvalidParameter(format!(
                "sub-box side {s} not in 1..={n}"
            )));
        }
        let positions = n - s + 1;
        let total = box_cells(dim, positions)?;
        let mut best = (0u64, 0usize);
        let mut lo = vec![0usize; dim];
        for pos in 0..total {
            unflatten(pos, positions, &mut lo);
            // Inclusion-exclusion over the 2^d corners.
            let mut sum = 0i128;
            for corner in 0..(1usize << dim) {
                let mut flat = 0usize;
                let mut sign = 1i128;
                for (axis, &l) in lo.iter().enumerate() {
                    let hi = corner >> (dim - 1 - axis) & 1 == 1;
                    let v = if hi {
                        l + s
                    } else {
                        sign = -sign;
                        l
                    };
                    flat = flat * m + v;
                }
                sum += sign * table[flat] as i128;
            }
            let sum = sum as u64;
            if sum > best.0 || pos == 0 {
                best = (sum, pos);
            }
        }
        unflatten(best.1, positions, &mut lo);
        out.push(SubBoxDensity {
            side: s,
            max_density: best.0 as f64 / (s as f64).powi(dim as i32),
            anchor: lo
                .iter()
                .zip(set.anchor())
                .map(|(&l, &a)| a + l as i64)
                .collect(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn congruence(r: u64, dim: usize, side: usize) -> PointSet {
        generate_set(
            &SetSpec::Congruence { r, shift: 0 },
            dim,
            side,
            BoundaryMode::Periodic,
        )
        .unwrap()
    }

    #[test]
    fn densities() {
        let full = PointSet::full(3, 4, BoundaryMode::Periodic).unwrap();
        assert_eq!(box_density(&full), 1.0);
        let empty = PointSet::empty(3, 4, BoundaryMode::Periodic).unwrap();
        assert_eq!(box_density(&empty), 0.0);
        let even = congruence(2, 5, 6);
        assert_eq!(box_density(&even), 0.03125);
    }

    #[test]
    fn congruence_listing() {
        let s = congruence(2, 1, 4);
        let pts: Vec<&[i64]> = s.points().collect();
        assert_eq!(pts, vec![&[2][..], &[4][..]]);
        let shifted = generate_set(
            &SetSpec::Congruence { r: 3, shift: 1 },
            1,
            7,
            BoundaryMode::Periodic,
        )
        .unwrap();
        let pts: Vec<i64> = shifted.points().map(|p| p[0]).collect();
        assert_eq!(pts, vec![1, 4, 7]);
    }

    #[test]
    fn bernoulli_determinism_and_extremes() {
        let spec = SetSpec::Bernoulli { p: 0.5, seed: 11 };
        let a = generate_set(&spec, 3, 6, BoundaryMode::Periodic).unwrap();
        let b = generate_set(&spec, 3, 6, BoundaryMode::Periodic).unwrap();
        assert_eq!(a, b);
        let c = generate_set(
            &SetSpec::Bernoulli { p: 0.5, seed: 12 },
            3,
            6,
            BoundaryMode::Periodic,
        )
        .unwrap();
        assert_ne!(a, c);
        let full = generate_set(
            &SetSpec::Bernoulli { p: 1.0, seed: 3 },
            2,
            5,
            BoundaryMode::Periodic,
        )
        .unwrap();
        assert_eq!(full.len(), 25);
        assert!(generate_set(
            &SetSpec::Bernoulli { p: 1.5, seed: 0 },
            2,
            5,
            BoundaryMode::Periodic
        )
        .is_err());
    }

    #[test]
    fn union_and_complement() {
        let spec: SetSpec = "union(congruence:r=2;congruence:r=3)".parse().unwrap();
        let s = generate_set(&spec, 1, 12, BoundaryMode::Periodic).unwrap();
        let pts: Vec<i64> = s.points().map(|p| p[0]).collect();
        assert_eq!(pts, vec![2, 3, 4, 6, 8, 9, 10, 12]);
        let spec: SetSpec = "complement(congruence:r=2,shift=0)".parse().unwrap();
        let s = generate_set(&spec, 1, 6, BoundaryMode::Periodic).unwrap();
        let pts: Vec<i64> = s.points().map(|p| p[0]).collect();
        assert_eq!(pts, vec![1, 3, 5]);
    }

    #[test]
    fn spec_round_trip() {
        for text in [
            "bernoulli:p=0.3,seed=7",
            "congruence:r=2,shift=0",
            "full",
            "empty",
            "union(bernoulli:p=0.1,seed=1;complement(congruence:r=3,shift=1))",
        ] {
            let spec: SetSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
        assert!("bernoulli:seed=1".parse::<SetSpec>().is_err());
        assert!("congruence:r=2,foo=1".parse::<SetSpec>().is_err());
        assert!("nonsense".parse::<SetSpec>().is_err());
    }

    #[test]
    fn uniformity_examples() {
        let full = PointSet::full(2, 12, BoundaryMode::Periodic).unwrap();
        let rep = uniformity_test_modulus(&full, 12, 0.01, UniformityVariant::Global).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.worst_ratio, 1.0);

        let even = congruence(2, 5, 4);
        let rep = uniformity_test_modulus(&even, 2, 0.5, UniformityVariant::Global).unwrap();
        assert_eq!(rep.worst_ratio, 32.0);
        assert_eq!(rep.worst_residue, vec![2, 2, 2, 2, 2]);
        assert!(!rep.passed);
        let rep = uniformity_test_modulus(&even, 2, 31f64.sqrt() + 1e-9, UniformityVariant::Global)
            .unwrap();
        assert!(rep.passed);
    }

    /// Bernoulli(1/2) on 60², q = 12: each class has 25 cells, so the densest
    /// of 144 classes almost always clears 1.25× the global density. The
    /// report is checked against a recount, not against a pass.
    #[test]
    fn bernoulli_sixty_matches_recount() {
        let mut passes = 0;
        for seed in 0..20 {
            let s = generate_set(
                &SetSpec::Bernoulli { p: 0.5, seed },
                2,
                60,
                BoundaryMode::Periodic,
            )
            .unwrap();
            let rep = uniformity_test(&s, 0.5, 1.0, UniformityVariant::Global).unwrap();
            assert_eq!(rep.q_eta, 12);
            let mut counts = vec![0usize; 144];
            for p in s.points() {
                counts[((p[0] - 1) % 12 * 12 + (p[1] - 1) % 12) as usize] += 1;
            }
            let (best, &most) = counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .unwrap();
            let ratio = (most as f64 / 25.0) / box_density(&s);
            assert!((rep.worst_ratio - ratio).abs() < 1e-12, "seed {seed}");
            assert_eq!(
                rep.worst_residue,
                vec![best as u64 / 12 + 1, best as u64 % 12 + 1]
            );
            assert_eq!(rep.passed, rep.worst_ratio <= 1.25);
            passes += rep.passed as usize;
        }
        assert_eq!(passes, 0);
    }

    #[test]
    fn q_one_always_passes() {
        let s = generate_set(
            &SetSpec::Bernoulli { p: 0.2, seed: 5 },
            3,
            5,
            BoundaryMode::Periodic,
        )
        .unwrap();
        let rep = uniformity_test_modulus(&s, 1, 1e-3, UniformityVariant::Global).unwrap();
        assert!(rep.passed);
        assert!((rep.worst_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn divisibility_errors() {
        let s = PointSet::full(2, 10, BoundaryMode::Periodic).unwrap();
        assert!(matches!(
            uniformity_test_modulus(&s, 3, 0.5, UniformityVariant::Global),
            Err(Error::Divisibility(_))
        ));
        assert!(matches!(
            uniformity_test_modulus(&s, 2, 0.5, UniformityVariant::Subcube { l: 4 }),
            Err(Error::Divisibility(_))
        ));
        assert!(uniformity_test_modulus(&s, 2, 0.5, UniformityVariant::Subcube { l: 10 }).is_ok());
    }

    #[test]
    fn subcube_variant_sees_local_clumps() {
        // Dense in the left half, empty on the right: globally residue-uniform
        // modulo 2 but not per sub-cube.
        let mut mask = vec![false; 64];
        for y in 0..8 {
            for x in 0..4 {
                mask[y * 8 + x] = true;
            }
        }
        let s = PointSet::from_mask(2, vec![0, 0], 8, BoundaryMode::Periodic, mask).unwrap();
        let g = uniformity_test_modulus(&s, 2, 0.1, UniformityVariant::Global).unwrap();
        assert!(g.passed);
        let sc = uniformity_test_modulus(&s, 2, 0.1, UniformityVariant::Subcube { l: 4 }).unwrap();
        assert!(!sc.passed);
        assert_eq!(sc.subcubes.len(), 4);
        assert!((sc.worst_ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn classes_partition_the_set() {
        let s = generate_set(
            &SetSpec::Bernoulli { p: 0.37, seed: 2 },
            3,
            12,
            BoundaryMode::Periodic,
        )
        .unwrap();
        for q in [1, 2, 3, 4, 6, 12] {
            let counts = residue_class_counts(&s, q).unwrap();
            assert_eq!(counts.iter().sum::<u64>() as usize, s.len());
        }
    }

    #[test]
    fn increment_on_congruence_sets() {
        let even = congruence(2, 5, 4);
        let trace = density_increment_modulus(&even, 2, 0.1, 10).unwrap();
        assert_eq!(trace.increments(), 1);
        assert_eq!(trace.status, IncrementStatus::Uniform);
        assert_eq!(trace.steps.last().unwrap().density, 1.0);
        assert_eq!(trace.steps[0].chosen_residue, Some(vec![2; 5]));

        let full = PointSet::full(2, 12, BoundaryMode::Periodic).unwrap();
        let trace = density_increment_modulus(&full, 12, 0.1, 10).unwrap();
        assert_eq!(trace.steps.len(), 1);

        let trace = density_increment_modulus(&even, 2, 0.1, 0).unwrap();
        assert_eq!(trace.status, IncrementStatus::BudgetExhausted);
        assert_eq!(trace.steps.len(), 1);
    }

    #[test]
    fn increment_densities_grow_geometrically() {
        let spec: SetSpec = "union(congruence:r=2;bernoulli:p=0.05,seed=4)"
            .parse()
            .unwrap();
        let s = generate_set(&spec, 2, 64, BoundaryMode::Periodic).unwrap();
        let eta = 0.4;
        let trace = density_increment_modulus(&s, 2, eta, 20).unwrap();
        for w in trace.steps.windows(2) {
            assert!(w[1].density >= (1.0 + eta * eta) * w[0].density);
            assert!(w[1].density <= 1.0);
        }
        assert!(trace.increments() as f64 <= increment_step_bound(box_density(&s), eta));
    }

    #[test]
    fn text_format_round_trip_and_errors() {
        let s = generate_set(
            &SetSpec::Bernoulli { p: 0.3, seed: 9 },
            2,
            5,
            BoundaryMode::Truncate,
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_text(&mut buf).unwrap();
        let back = PointSet::read_text(&buf[..]).unwrap();
        assert_eq!(back, s);

        let dup = "2 3 0 0 periodic\n1 1\n2 2\n1 1\n";
        match PointSet::read_text(dup.as_bytes()) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("line 2"));
            }
            other => panic!("{other:?}"),
        }
        let outside = "2 3 0 0 periodic\n1 1\n0 2\n";
        assert!(matches!(
            PointSet::read_text(outside.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        let short = "2 3 0 0 periodic\n1\n";
        assert!(matches!(
            PointSet::read_text(short.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let header = "2 3 0 periodic\n";
        assert!(matches!(
            PointSet::read_text(header.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        let anchored = "1 4 10 truncate\n14\n11\n";
        let s = PointSet::read_text(anchored.as_bytes()).unwrap();
        assert_eq!(s.points().map(|p| p[0]).collect::<Vec<_>>(), vec![11, 14]);
    }

    #[test]
    fn sub_box_ladder() {
        let mut mask = vec![false; 36];
        for y in 2..5 {
            for x in 1..4 {
                mask[y * 6 + x] = true;
            }
        }
        let s = PointSet::from_mask(2, vec![10, 20], 6, BoundaryMode::Truncate, mask).unwrap();
        let ladder = sub_box_density_ladder(&s, &[1, 3, 6]).unwrap();
        assert_eq!(ladder[0].max_density, 1.0);
        assert_eq!(ladder[1].max_density, 1.0);
        assert_eq!(ladder[1].anchor, vec![12, 21]);
        assert_eq!(ladder[2].max_density, 9.0 / 36.0);
    }
}
