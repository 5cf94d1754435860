//! Gauss–Legendre quadrature.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // Tricomi's initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

/// A Gauss–Legendre rule mapped onto `[a, b]`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn new(n: usize, a: f64, b: f64) -> Self {
        let (x, w) = gauss_legendre(n);
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        Self {
            nodes: x.iter().map(|&t| mid + half * t).collect(),
            weights: w.iter().map(|&v| v * half).collect(),
        }
    }

    /// Integrate over `[a, b]`, treating `self` as a rule on `[−1, 1]`.
    /// Saves rebuilding nodes inside nested quadratures.
    pub fn integrate_over<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `Γ(k/2)` for a positive integer `k`.
pub fn gamma_half(k: u32) -> f64 {
    assert!(k >= 1, "gamma_half needs k >= 1");
    let (mut x, mut acc) = if k.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (0.5, PI.sqrt())
    };
    while 2.0 * x < k as f64 {
        acc *= x;
        x += 1.0;
    }
    acc
}

/// Surface area of the unit sphere `S^k ⊂ ℝ^{k+1}`: `2π^{(k+1)/2}/Γ((k+1)/2)`.
pub fn unit_sphere_area(k: u32) -> f64 {
    2.0 * PI.powf((k + 1) as f64 / 2.0) / gamma_half(k + 1)
}
