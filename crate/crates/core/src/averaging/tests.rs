use super::*;
use crate::lattice::enumerate_sphere;
use crate::spectral::{dft, sigma_hat};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const P: BoundaryMode = BoundaryMode::Periodic;

fn random_real(dim: usize, side: usize, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = side.pow(dim as u32);
    let vals: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    GridFunction::from_real(dim, side, P, &vals).unwrap()
}

fn max_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `|S_λ|^{−1} Σ_y f(x − qy)` evaluated point by point from coordinates.
fn oracle_average(f: &GridFunction, lambda: u64, q: i64) -> Vec<Complex64> {
    let s = enumerate_sphere(f.dim(), lambda).unwrap();
    let m = f.side() as i64;
    let dim = f.dim();
    (0..f.len())
        .map(|idx| {
            let mut x = vec![0i64; dim];
            let mut rest = idx as i64;
            for c in x.iter_mut().rev() {
                *c = rest % m;
                rest /= m;
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for y in s.points() {
                let p: Vec<i64> = x.iter().zip(y).map(|(&a, &b)| a - q * b).collect();
                acc += f.at(&p);
            }
            acc / s.count() as f64
        })
        .collect()
}

#[test]
fn constants_are_preserved() {
    let one = GridFunction::constant(4, 6, P, Complex64::new(1.0, 0.0)).unwrap();
    for lambda in [1, 2, 5] {
        let a = spherical_average(&one, lambda, 1).unwrap();
        assert!(a
            .values()
            .iter()
            .all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }
}

#[test]
fn delta_spreads_over_dilated_sphere() {
    let (dim, side, lambda, q) = (3usize, 12usize, 2u64, 2u64);
    let delta = GridFunction::delta(dim, side, P).unwrap();
    let a = spherical_average_with(&delta, lambda, q, Route::Direct).unwrap();
    let s = enumerate_sphere(dim, lambda).unwrap();
    let w = 1.0 / s.count() as f64;
    let mut want = GridFunction::zeros(dim, side, P).unwrap();
    for y in s.points() {
        let p: Vec<i64> = y.iter().map(|c| c * q as i64).collect();
        let idx = want.index_of(&p);
        want.values_mut()[idx] += w;
    }
    assert!(max_diff(&a, &want) < 1e-15);
}

#[test]
fn routes_agree() {
    for (dim, side, lambda, q) in [
        (5usize, 8usize, 2u64, 1u64),
        (3, 12, 11, 1),
        (2, 12, 25, 3),
        (4, 6, 3, 2),
    ] {
        let f = random_real(dim, side, lambda * 7 + q);
        let direct = spherical_average_with(&f, lambda, q, Route::Direct).unwrap();
        let spectral = spherical_average_with(&f, lambda, q, Route::Spectral).unwrap();
        assert!(
            max_diff(&direct, &spectral) < 1e-10,
            "d={dim} M={side} λ={lambda} q={q}"
        );
        let oracle = oracle_average(&f, lambda, q as i64);
        let o = f.with_values(oracle).unwrap();
        assert!(max_diff(&direct, &o) < 1e-12);
    }
}

#[test]
fn multiplier_identity() {
    // dft(A_λ f) = f̂ · σ̂_λ, and ⟨f, A_λ f⟩ = M^{−d} Σ_k |f̂|² σ̂_λ.
    let (dim, side, lambda) = (3usize, 8usize, 6u64);
    let f = random_real(dim, side, 3);
    let a = spherical_average(&f, lambda, 1).unwrap();
    let fa = dft(&a);
    let ff = dft(&f);
    let s = enumerate_sphere(dim, lambda).unwrap();
    let mut freq_side = Complex64::new(0.0, 0.0);
    for idx in 0..fa.values().len() {
        let sh = sigma_hat(&s, &ff.frequency(idx)).unwrap();
        assert!((fa.values()[idx] - ff.values()[idx] * sh).norm() < 1e-10);
        freq_side += ff.values()[idx].norm_sqr() * sh;
    }
    freq_side /= f.len() as f64;
    let space_side = f.inner(&a).unwrap();
    assert!((space_side - freq_side).norm() < 1e-10);
}

#[test]
fn boundary_checks() {
    let f = random_real(2, 10, 1);
    assert!(matches!(
        spherical_average(&f, 1, 3),
        Err(Error::Divisibility(_))
    ));
    assert!(spherical_average(&f, 1, 5).is_ok());
    assert!(matches!(
        spherical_average(&random_real(3, 4, 1), 7, 1),
        Err(Error::EmptySphere { .. })
    ));

    let mut t = GridFunction::zeros(2, 10, BoundaryMode::Truncate).unwrap();
    t.values_mut()[0] = Complex64::new(1.0, 0.0);
    assert!(matches!(
        spherical_average(&t, 1, 1),
        Err(Error::Padding { .. })
    ));
    let t = t.with_support(4, 3).unwrap();
    assert!(spherical_average(&t, 9, 1).is_ok());
    // ⌈√10⌉ = 4 > 3.
    assert!(matches!(
        spherical_average(&t, 10, 1),
        Err(Error::Padding {
            required: 4,
            available: 3
        })
    ));
    assert!(matches!(
        spherical_average(&t, 2, 2),
        Err(Error::Padding { required: 4, .. })
    ));
}

#[test]
fn truncate_mode_never_wraps() {
    let set = crate::density::generate_set(
        &"bernoulli:p=0.5,seed=3".parse().unwrap(),
        2,
        6,
        BoundaryMode::Truncate,
    )
    .unwrap();
    let pad = 3usize;
    let g = GridFunction::indicator(&set, 6 + 2 * pad).unwrap();
    let a = spherical_average(&g, 5, 1).unwrap();
    // Grid cell u holds the box point anchor + 1 + u; compare against
    // unbounded ℤ² arithmetic.
    let s = enumerate_sphere(2, 5).unwrap();
    let base = set.anchor();
    for idx in 0..a.len() {
        let x = [(idx / 12) as i64, (idx % 12) as i64];
        // Points on the far side of the grid stand for negative coordinates.
        let lift = |c: i64| if c >= 12 - pad as i64 { c - 12 } else { c };
        let x = [lift(x[0]), lift(x[1])];
        let mut hits = 0usize;
        for y in s.points() {
            let p = [base[0] + 1 + x[0] - y[0], base[1] + 1 + x[1] - y[1]];
            if set.contains(&p) {
                hits += 1;
            }
        }
        assert!((a.values()[idx].re - hits as f64 / s.count() as f64).abs() < 1e-12);
    }
}

#[test]
fn maximal_examples() {
    let (dim, side) = (5usize, 8usize);
    let delta = GridFunction::delta(dim, side, P).unwrap();
    let m = maximal_average(&delta, 1, 2, 1).unwrap();
    let mut want = vec![0.0f64; delta.len()];
    for lambda in [1u64, 2] {
        let s = enumerate_sphere(dim, lambda).unwrap();
        for y in s.points() {
            let idx = delta.index_of(y);
            want[idx] = want[idx].max(1.0 / s.count() as f64);
        }
    }
    for (v, w) in m.values().iter().zip(&want) {
        assert!((v.re - w).abs() < 1e-12 && v.im == 0.0);
    }

    let f = random_real(3, 8, 4).map(|v| Complex64::new(v.re.abs(), 0.0));
    let single = maximal_average(&f, 6, 6, 1).unwrap();
    let avg = spherical_average(&f, 6, 1).unwrap();
    for (s, a) in single.values().iter().zip(avg.values()) {
        assert!((s.re - a.norm()).abs() < 1e-12);
    }
    let wide = maximal_average(&f, 6, 9, 1).unwrap();
    for (w, a) in wide.values().iter().zip(avg.values()) {
        assert!(w.re >= a.re - 1e-12);
    }
    assert!(maximal_average(&f, 5, 4, 1).is_err());
    // λ = 7 has no representation in d = 3 and is skipped.
    assert!(maximal_average(&f, 7, 8, 1).is_ok());
    assert!(matches!(
        maximal_average(&f, 7, 7, 1),
        Err(Error::EmptySphere { .. })
    ));
}

#[test]
fn mollifier_regime() {
    assert!(matches!(
        mollifier(0.5, 4, 1.0),
        Err(Error::DegenerateCutoff { .. })
    ));
    let m = mollifier(0.5, 576, 1.0).unwrap();
    assert_eq!(m.q_eta, BigUint::from(12u32));
    assert_eq!(m.l2, 12.0);
    assert!(mollifier(1.0, 100, 1.0).is_err());
    assert!(mollifier(0.5, 0, 1.0).is_err());
}

#[test]
fn mollified_kills_constants() {
    let one = GridFunction::constant(3, 8, P, Complex64::new(1.0, 0.0)).unwrap();
    // C = 0.3 keeps q_η = 1 for η = 0.5, so L₂ = 0.5·√16 = 2 ≥ q_η.
    let out = mollified_maximal(&one, 0.5, 16, 20, 0.3).unwrap();
    assert!(out.values().iter().all(|v| v.norm() < 1e-8));
}

/// Where `L₂ = ηλ₀^{1/2} ≥ q_η` the mollified output shrinks as η does.
/// The range [4, 16] on ℤ_16^5 never gets here: `L₂ ≤ 1 < q_η`.
#[test]
fn mollified_decay_in_regime() {
    // C = 0.25: q_η = 1, 1, 2 and L₂ = 5, 4, 3.
    let etas = [0.5, 0.4, 0.3];
    for seed in 0..3 {
        let f = random_real(3, 32, seed);
        let ratios: Vec<f64> = etas
            .iter()
            .map(|&eta| {
                let out = mollified_maximal(&f, eta, 100, 120, 0.25).unwrap();
                l2_ratio(&out, &f).unwrap().powi(2)
            })
            .collect();
        assert!(
            ratios.windows(2).all(|w| w[1] <= w[0]),
            "seed {seed}: {ratios:?}"
        );
    }
    assert!(matches!(
        mollifier(0.25, 4, 0.25),
        Err(Error::DegenerateCutoff { .. })
    ));
}

#[test]
fn mollified_single_lambda_matches_definition() {
    let f = random_real(3, 8, 8);
    let (eta, lambda, c) = (0.5, 17u64, 0.3);
    let out = mollified_maximal(&f, eta, lambda, lambda, c).unwrap();
    let m = mollifier(eta, lambda, c).unwrap();
    let (g, _) = remove_low_frequencies(&f, 1, m.l2).unwrap();
    // Residue through the space side: f − f * ψ with ψ periodized.
    let psi = build_cutoff(3, 1, m.l2).unwrap().periodized(8).unwrap();
    let conv = crate::spectral::idft(&dft(&f).multiply(&dft(&psi)).unwrap(), P);
    let g2 = f
        .lin_comb(Complex64::new(1.0, 0.0), &conv, Complex64::new(-1.0, 0.0))
        .unwrap();
    assert!(max_diff(&g, &g2) < 1e-6);
    let a = spherical_average(&g, lambda, 1).unwrap();
    for (o, v) in out.values().iter().zip(a.values()) {
        assert!((o.re - v.norm()).abs() < 1e-10);
    }
}

#[test]
fn l2_ratio_examples() {
    let f = random_real(4, 6, 2);
    assert!((l2_ratio(&f, &f).unwrap() - 1.0).abs() < 1e-15);
    for lambda in [1, 3, 6] {
        let a = spherical_average(&f, lambda, 1).unwrap();
        assert!(l2_ratio(&a, &f).unwrap() <= 1.0 + 1e-10);
    }
    let z = GridFunction::zeros(4, 6, P).unwrap();
    assert!(l2_ratio(&f, &z).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linearity(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0, lambda in 1u64..9) {
        let f = random_real(3, 6, seed);
        let g = random_real(3, 6, seed.wrapping_add(1));
        let (a, b) = (Complex64::new(alpha, 0.0), Complex64::new(beta, 0.0));
        prop_assume!(!enumerate_sphere(3, lambda).unwrap().is_empty());
        let lhs = spherical_average(&f.lin_comb(a, &g, b).unwrap(), lambda, 1).unwrap();
        let rhs = spherical_average(&f, lambda, 1).unwrap()
            .lin_comb(a, &spherical_average(&g, lambda, 1).unwrap(), b).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn mass_and_contractivity(seed in any::<u64>(), lambda in 1u64..12) {
        let f = random_real(4, 6, seed);
        let a = spherical_average(&f, lambda, 1).unwrap();
        let (sa, sf) = (a.sum(), f.sum());
        prop_assert!((sa - sf).norm() <= 1e-8 * sf.norm().max(1.0));
        prop_assert!(l2_ratio(&a, &f).unwrap() <= 1.0 + 1e-10);
    }

    #[test]
    fn maximal_monotone_in_range(seed in any::<u64>(), l0 in 1u64..5, extra in 0u64..4, grow in 1u64..4) {
        let f = random_real(4, 4, seed);
        let narrow = maximal_average(&f, l0, l0 + extra, 1).unwrap();
        let wide = maximal_average(&f, l0, l0 + extra + grow, 1).unwrap();
        for (n, w) in narrow.values().iter().zip(wide.values()) {
            prop_assert!(w.re >= n.re);
        }
    }
}
