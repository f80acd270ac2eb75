// SPDX-License-Identifier: Apache-2.0

use nalgebra::DVector;
use rand::Rng;
use sdwave_core::control::{
    cost_gradient, evaluate_cost, solve_optimal, solve_optimal_control_space, value_function, values_parallel,
};
use sdwave_core::forward::solve_voc;
use sdwave_core::kernels::z_oracle;
use sdwave_core::scenarios::{seeded_rng, smooth_state};
use sdwave_core::spectral::boundary_dot;
use sdwave_core::{
    BoundaryVector, ControlFactor, ControlSignal, KernelTable, OperatorAssembly, Regulator, SpectralBasis, State,
    TimeGrid,
};

fn table(n_modes: usize, t_final: f64, n_steps: usize) -> KernelTable {
    let basis = SpectralBasis::new(n_modes).unwrap();
    let grid = TimeGrid::new(t_final, n_steps).unwrap();
    KernelTable::new(&basis, &grid).unwrap()
}

fn random_panels(rng: &mut impl Rng, n: usize) -> Vec<BoundaryVector> {
    (0..n)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect()
}

fn dot_panels(a: &[BoundaryVector], b: &[BoundaryVector]) -> f64 {
    a.iter().zip(b).map(|(x, y)| boundary_dot(x, y)).sum()
}

#[test]
fn lambda_adjoint_identity() {
    let k = table(6, 0.5, 32);
    let asm = OperatorAssembly::new(&k, 8).unwrap();
    let mut rng = seeded_rng(21, 0);
    for _ in 0..10 {
        let u = random_panels(&mut rng, asm.n_panels());
        let v: Vec<Vec<f64>> = (0..=asm.n_panels())
            .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let lhs = asm.inner(&asm.apply_lambda(&u).unwrap(), &v);
        let rhs = asm.control_inner(&u, &asm.apply_lambda_star(&v).unwrap());
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }
}

#[test]
fn dense_and_matrix_free_lambda_agree() {
    let k = table(4, 0.5, 16);
    let asm = OperatorAssembly::new(&k, 4).unwrap();
    let mut rng = seeded_rng(22, 0);
    let u = random_panels(&mut rng, asm.n_panels());
    let flat = DVector::from_iterator(2 * u.len(), u.iter().flatten().copied());
    let dense = asm.lambda_matrix() * flat;
    let free = asm.apply_lambda(&u).unwrap();
    for (i, row) in free.iter().enumerate() {
        for (n, x) in row.iter().enumerate() {
            assert!((x - dense[i * 4 + n]).abs() < 1e-14);
        }
    }
    assert_eq!(asm.lambda_block(2, 0, 2), [0.0, 0.0]);
}

#[test]
fn assembly_reproduces_forward_solver() {
    let k = table(6, 0.5, 64);
    let mut rng = seeded_rng(23, 0);
    let state = smooth_state(&mut rng, &k, 8).unwrap();
    let asm = OperatorAssembly::new(&k, 8).unwrap();
    let u = random_panels(&mut rng, asm.n_panels());
    let h = asm.build_h(&state).unwrap();
    let lu = asm.apply_lambda(&u).unwrap();
    let v = solve_voc(&k, &state, &ControlSignal::Panel { start: 8, values: u }).unwrap();
    for (i, row) in v.rows().iter().enumerate() {
        for n in 0..6 {
            assert!((row[n] - h[i][n] - lu[i][n]).abs() < 1e-13);
        }
    }
    let gamma = asm.apply_gamma(&state.v_hat().coeffs, state.xi()).unwrap();
    let y = asm.apply_y(&state.y_hat().coeffs);
    for i in 0..h.len() {
        for n in 0..6 {
            assert!((gamma[i][n] + y[i][n] - h[i][n]).abs() < 1e-14);
        }
    }
    assert!(asm.build_h(&State::zero(6, 9)).is_err());
}

/// `∫₀^S Z(s) φ(s) ds` for one mode, where `φ` solves the memory equation
/// from present value `a` and seed `b` under the panel control `du`, found
/// by classical Runge-Kutta on `(φ, w, ∫Zφ)` with
/// `φ' = (λ+1)φ - w - λ du`, `w' = φ - w`, `w(0) = -b`.
fn pairing_oracle(lambda: f64, a: f64, b: f64, du: &[f64], dt: f64, sub: usize) -> f64 {
    let h = dt / sub as f64;
    let rhs = |t: f64, x: [f64; 3], u: f64| -> [f64; 3] {
        [
            (lambda + 1.0) * x[0] - x[1] - lambda * u,
            x[0] - x[1],
            z_oracle(lambda, t).unwrap() * x[0],
        ]
    };
    let add = |x: [f64; 3], k: [f64; 3], s: f64| [x[0] + s * k[0], x[1] + s * k[1], x[2] + s * k[2]];
    let mut x = [a, -b, 0.0];
    for (p, &u) in du.iter().enumerate() {
        for q in 0..sub {
            let t = p as f64 * dt + q as f64 * h;
            let k1 = rhs(t, x, u);
            let k2 = rhs(t + 0.5 * h, add(x, k1, 0.5 * h), u);
            let k3 = rhs(t + 0.5 * h, add(x, k2, 0.5 * h), u);
            let k4 = rhs(t + h, add(x, k3, h), u);
            for i in 0..3 {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
    }
    x[2]
}

#[test]
fn node_adjoint_matches_time_stepping_oracle() {
    let k = table(4, 0.5, 32);
    let asm = OperatorAssembly::new(&k, 16).unwrap();
    let mut rng = seeded_rng(24, 0);
    let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u = random_panels(&mut rng, asm.n_panels());
    let got = asm.lambda_star_at_start(&a, &b, &u).unwrap();
    let basis = k.basis();
    let mut want = [0.0; 2];
    for n in 0..4 {
        let d = basis.dmap(n);
        let du: Vec<f64> = u.iter().map(|x| boundary_dot(&d, x)).collect();
        let lam = basis.lambda(n);
        let c = -lam * pairing_oracle(lam, a[n], b[n], &du, k.grid().dt(), 400);
        want[0] += c * d[0];
        want[1] += c * d[1];
    }
    for i in 0..2 {
        assert!((got[i] - want[i]).abs() < 1e-8 * (1.0 + want[i].abs()), "{got:?} {want:?}");
    }
}

#[test]
fn factor_solves_normal_equations() {
    let k = table(4, 0.5, 32);
    let f = ControlFactor::new(&k, 24).unwrap();
    let (lo, hi) = f.spectrum();
    assert!(lo >= 1.0 - 1e-12 && hi >= lo);
    assert_eq!(f.max_panels(), 24);
    let asm = OperatorAssembly::new(&k, 16).unwrap();
    let mut rng = seeded_rng(25, 0);
    let b = random_panels(&mut rng, 16);
    let x = f.solve(16, &b).unwrap();
    let lx = asm.apply_lambda(&x).unwrap();
    let ax = asm.lambda_t_q(&lx).unwrap();
    let dt = k.grid().dt();
    for ((r, xi), bi) in ax.iter().zip(&x).zip(&b) {
        for c in 0..2 {
            assert!((r[c] + dt * xi[c] - bi[c]).abs() < 1e-12);
        }
    }
    assert!(f.solve(30, &random_panels(&mut rng, 30)).is_err());
    assert!(ControlFactor::new(&k, 40).is_err());
}

#[test]
fn optimal_control_routes_agree() {
    let k = table(8, 0.5, 64);
    let mut rng = seeded_rng(26, 0);
    let state = smooth_state(&mut rng, &k, 8).unwrap();
    let sol = solve_optimal(&k, &state).unwrap();
    let cs = solve_optimal_control_space(&k, &state).unwrap();
    let diff = sol
        .u_plus
        .values()
        .iter()
        .zip(cs.values())
        .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
        .fold(0.0, f64::max);
    assert!(diff < 1e-9);
    assert!(sol.residual < 1e-8);
    let w = value_function(&k, &state).unwrap();
    assert!((sol.value - w).abs() < 1e-9 * (1.0 + w));
    let reg = Regulator::new(&k, 8).unwrap();
    assert!((reg.value(&state).unwrap() - w).abs() < 1e-9 * (1.0 + w));
    assert_eq!(reg.feedback_gain(&state).unwrap(), cs.values()[0]);
}

#[test]
fn gradient_matches_finite_differences() {
    let k = table(6, 0.5, 64);
    let mut rng = seeded_rng(27, 0);
    let state = smooth_state(&mut rng, &k, 8).unwrap();
    let u = ControlSignal::Panel { start: 8, values: random_panels(&mut rng, 56) };
    let d = ControlSignal::Panel { start: 8, values: random_panels(&mut rng, 56) };
    let g = cost_gradient(&k, &state, &u).unwrap();
    let eps = 1e-4;
    let jp = evaluate_cost(&k, &state, &u.combine(1.0, &d, eps).unwrap()).unwrap();
    let jm = evaluate_cost(&k, &state, &u.combine(1.0, &d, -eps).unwrap()).unwrap();
    let fd = (jp - jm) / (2.0 * eps);
    let an = k.grid().dt() * dot_panels(&g, d.values());
    assert!((fd - an).abs() < 1e-8 * (1.0 + an.abs()), "{fd} {an}");
}

#[test]
fn optimal_cost_is_minimal() {
    let k = table(6, 0.5, 64);
    let mut rng = seeded_rng(28, 0);
    let state = smooth_state(&mut rng, &k, 8).unwrap();
    let sol = solve_optimal(&k, &state).unwrap();
    for _ in 0..5 {
        let d = ControlSignal::Panel { start: 8, values: random_panels(&mut rng, 56) };
        for eps in [1e-3, 1e-1] {
            let j = evaluate_cost(&k, &state, &sol.u_plus.combine(1.0, &d, eps).unwrap()).unwrap();
            // J(u⁺ + εδ) - J(u⁺) = ε²(‖δ‖² + ‖Λδ‖²) ≥ ε²‖δ‖².
            assert!(j - sol.value >= eps * eps * d.norm_sq(k.grid().dt()) * (1.0 - 1e-6));
        }
    }
}

#[test]
fn value_is_a_quadratic_form() {
    let k = table(6, 0.5, 64);
    let mut rng = seeded_rng(29, 0);
    let s1 = smooth_state(&mut rng, &k, 16).unwrap();
    let s2 = smooth_state(&mut rng, &k, 16).unwrap();
    let reg = Regulator::new(&k, 8).unwrap();
    let w1 = reg.value(&s1).unwrap();
    assert!(w1 > 0.0);
    assert!((reg.value(&s1.scaled(-2.0)).unwrap() - 4.0 * w1).abs() < 1e-12 * w1);
    assert!((reg.p_form(&s1, &s1).unwrap() - w1).abs() < 1e-12 * w1);
    let p12 = reg.p_form(&s1, &s2).unwrap();
    assert!((p12 - reg.p_form(&s2, &s1).unwrap()).abs() < 1e-12 * w1);
    let w2 = reg.value(&s2).unwrap();
    let sum = reg.value(&s1.combine(1.0, &s2, 1.0).unwrap()).unwrap();
    assert!((sum - w1 - w2 - 2.0 * p12).abs() < 1e-11 * (w1 + w2));
    let both = values_parallel(&reg, &[s1.clone(), s2]).unwrap();
    assert_eq!(both[0], w1);
    assert!(reg.assembly(4).is_err());
}

#[test]
fn zero_state_has_zero_control() {
    let k = table(4, 0.5, 32);
    let state = State::zero(4, 8);
    let sol = solve_optimal(&k, &state).unwrap();
    assert!(sol.u_plus.values().iter().all(|u| *u == [0.0, 0.0]));
    assert_eq!(sol.value, 0.0);
}

#[test]
fn horizon_state_needs_no_control() {
    let k = table(4, 0.5, 32);
    let mut rng = seeded_rng(30, 0);
    let state = smooth_state(&mut rng, &k, 32).unwrap();
    let reg = Regulator::new(&k, 0).unwrap();
    assert_eq!(reg.feedback_gain(&state).unwrap(), [0.0, 0.0]);
    assert_eq!(reg.value(&state).unwrap(), 0.0);
    assert!(evaluate_cost(&k, &state, &ControlSignal::zero_panels(8, 16)).is_err());
}
