// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::{PI, SQRT_2};

use proptest::prelude::*;
use rand::Rng;
use sdwave_core::scenarios::seeded_rng;
use sdwave_core::spectral::{boundary_dot, dot};
use sdwave_core::{Error, ModalVector, SpectralBasis};

/// Composite Simpson rule with `m` (even) subintervals on `[0, 1]`.
fn simpson(f: impl Fn(f64) -> f64, m: usize) -> f64 {
    let h = 1.0 / m as f64;
    let mut s = f(0.0) + f(1.0);
    for k in 1..m {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn zero_modes_rejected() {
    assert!(matches!(SpectralBasis::new(0), Err(Error::InvalidArgument { .. })));
}

#[test]
fn first_eigenvalue() {
    let b = SpectralBasis::new(1).unwrap();
    assert_eq!(b.n_modes(), 1);
    assert!((b.lambda(0) + 9.869_604_401_089_358).abs() < 1e-12);
}

#[test]
fn eigenvalues_strictly_decreasing_and_negative() {
    let b = SpectralBasis::new(16).unwrap();
    let ev = b.eigenvalues();
    assert!(ev[0] < 0.0);
    for w in ev.windows(2) {
        assert!(w[1] < w[0]);
    }
}

#[test]
fn second_mode_dirichlet_coefficients() {
    let b = SpectralBasis::new(2).unwrap();
    let d = b.dmap(1);
    let c = SQRT_2 / (2.0 * PI);
    assert!((d[0] - c).abs() < 1e-15);
    assert!((d[1] + c).abs() < 1e-15);
}

#[test]
fn even_modes_have_opposite_coefficients() {
    let b = SpectralBasis::new(12).unwrap();
    for n in (1..12).step_by(2) {
        let d = b.dmap(n);
        assert!((d[0] + d[1]).abs() < 1e-16, "mode {}", n + 1);
    }
}

#[test]
fn dirichlet_coefficients_match_quadrature() {
    let b = SpectralBasis::new(8).unwrap();
    for n in 0..8 {
        let k = (n + 1) as f64 * PI;
        let left = simpson(|x| (1.0 - x) * SQRT_2 * (k * x).sin(), 10_000);
        let right = simpson(|x| x * SQRT_2 * (k * x).sin(), 10_000);
        let d = b.dmap(n);
        assert!((d[0] - left).abs() < 1e-10, "mode {}", n + 1);
        assert!((d[1] - right).abs() < 1e-10, "mode {}", n + 1);
    }
}

#[test]
fn dirichlet_map_examples() {
    let b = SpectralBasis::new(4).unwrap();
    let du = b.dirichlet_map(&[1.0, 0.0]);
    assert!((du.coeffs[0] - 0.450_158_158_078_553).abs() < 1e-14);
    assert_eq!(b.dirichlet_map(&[0.0, 0.0]).coeffs, vec![0.0; 4]);
    assert!(b.dirichlet_map(&[1.0, 1.0]).coeffs[1].abs() < 1e-16);
}

#[test]
fn harmonic_extension_reconstructs_linear_profile() {
    // The truncated series converges slowly, so only a loose comparison.
    let b = SpectralBasis::new(400).unwrap();
    let du = b.dirichlet_map(&[2.0, -1.0]);
    let x = 0.3;
    assert!((b.evaluate(&du.coeffs, x) - (2.0 * (1.0 - x) - x)).abs() < 1e-2);
}

#[test]
fn control_operator_examples() {
    let b = SpectralBasis::new(6).unwrap();
    let ad = b.apply_ad(&[1.0, 0.0]);
    assert_eq!(ad.space_tag, -1.0);
    assert!((ad.coeffs[0] + 4.442_882_938_158_366).abs() < 1e-12);
    assert_eq!(b.apply_ad(&[0.0, 0.0]).coeffs, vec![0.0; 6]);
    let right = b.apply_ad(&[0.0, 1.0]);
    for (n, c) in right.coeffs.iter().enumerate() {
        let expected_sign = if (n + 1) % 2 == 0 { 1.0 } else { -1.0 };
        assert_eq!(c.signum(), expected_sign, "mode {}", n + 1);
    }
}

#[test]
fn adjoint_identity_on_random_pairs() {
    let b = SpectralBasis::new(8).unwrap();
    let mut rng = seeded_rng(11, 0);
    for _ in 0..100 {
        let u = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let p: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = dot(&b.apply_ad(&u).coeffs, &p);
        let rhs = boundary_dot(&u, &b.adjoint_ad(&p));
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }
}

#[test]
fn adjoint_of_zero_is_zero() {
    let b = SpectralBasis::new(8).unwrap();
    assert_eq!(b.adjoint_ad(&[0.0; 8]), [0.0, 0.0]);
}

#[test]
fn adjoint_paired_with_own_image() {
    let b = SpectralBasis::new(8).unwrap();
    let p = b.apply_ad(&[1.0, 0.0]);
    let g = b.adjoint_ad(&p.coeffs);
    assert!((g[0] - p.dot(&p)).abs() < 1e-10 * p.dot(&p));
}

#[test]
fn fractional_powers() {
    let b = SpectralBasis::new(3).unwrap();
    let e1 = ModalVector::new(vec![1.0, 0.0, 0.0]);
    assert_eq!(b.apply_fractional(0.0, &e1).coeffs, e1.coeffs);
    let half = b.apply_fractional(0.5, &b.apply_fractional(0.5, &e1));
    assert!((half.coeffs[0] - PI * PI).abs() < 1e-12);
    assert_eq!(half.space_tag, -1.0);
    let v = ModalVector::new(vec![0.3, -1.2, 2.5]);
    let round = b.apply_fractional(-1.0, &b.apply_fractional(1.0, &v));
    for (a, c) in round.coeffs.iter().zip(&v.coeffs) {
        assert!((a - c).abs() < 1e-13 * c.abs().max(1.0));
    }
}

#[test]
fn dual_norm_weights() {
    let b = SpectralBasis::new(2).unwrap();
    let y = [PI * PI, 0.0];
    assert!((b.dual_norm_sq(&y) - 1.0).abs() < 1e-14);
}

proptest! {
    #[test]
    fn fractional_powers_compose(alpha in -1.5f64..1.5, beta in -1.5f64..1.5,
                                 c in proptest::collection::vec(-10.0f64..10.0, 6)) {
        let b = SpectralBasis::new(6).unwrap();
        let v = ModalVector::new(c);
        let two = b.apply_fractional(beta, &b.apply_fractional(alpha, &v));
        let one = b.apply_fractional(alpha + beta, &v);
        for (x, y) in two.coeffs.iter().zip(&one.coeffs) {
            prop_assert!((x - y).abs() <= 1e-13 * x.abs().max(y.abs()).max(1.0));
        }
        prop_assert!((two.space_tag - one.space_tag).abs() < 1e-15);
    }

    #[test]
    fn dirichlet_map_is_linear(u0 in -5.0f64..5.0, u1 in -5.0f64..5.0, s in -3.0f64..3.0) {
        let b = SpectralBasis::new(5).unwrap();
        let a = b.dirichlet_map(&[s * u0, s * u1]);
        let c = b.dirichlet_map(&[u0, u1]);
        for (x, y) in a.coeffs.iter().zip(&c.coeffs) {
            prop_assert!((x - s * y).abs() < 1e-13);
        }
    }
}
