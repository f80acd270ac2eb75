// SPDX-License-Identifier: Apache-2.0

use sdwave_core::forward::{
    extend_state, hat_y_from_initial, memory_functional, simulate_damped_wave, solve_volterra, solve_voc,
};
use sdwave_core::kernels::expm2;
use sdwave_core::scenarios::{random_trig_control, seeded_rng, smooth_state, wave_initial_data};
use sdwave_core::{ControlSignal, KernelTable, ModalField, ModalVector, SmoothControl, SpectralBasis, State, TimeGrid};

fn table(n_modes: usize, t_final: f64, n_steps: usize) -> KernelTable {
    let basis = SpectralBasis::new(n_modes).unwrap();
    let grid = TimeGrid::new(t_final, n_steps).unwrap();
    KernelTable::new(&basis, &grid).unwrap()
}

/// Memory equation of one mode as a 2x2 linear system: with
/// `w = ∫ e^{-(t-s)} v(s) ds - e^{-t} c` the pair `(v, w)` solves
/// `v' = (λ+1)v - w`, `w' = v - w` from `(v̂, -c)`.
fn mode_oracle(lambda: f64, v_hat: f64, c: f64, t: f64) -> f64 {
    let e = expm2([[lambda + 1.0, -1.0], [1.0, -1.0]], t);
    e[0][0] * v_hat - e[0][1] * c
}

#[test]
fn zero_data_gives_zero_solution() {
    let k = table(6, 0.5, 32);
    let state = State::zero(6, 4);
    let u = ControlSignal::zero_panels(4, 32);
    let v = solve_volterra(&k, &state, &u).unwrap();
    assert_eq!(v.len(), 29);
    assert!(v.rows().iter().flatten().all(|x| *x == 0.0));
    let w = solve_voc(&k, &state, &u).unwrap();
    assert!(w.rows().iter().flatten().all(|x| *x == 0.0));
}

#[test]
fn uncontrolled_modes_match_matrix_exponential() {
    let k = table(4, 0.5, 256);
    let v_hat = vec![1.0, -0.5, 0.25, 0.1];
    let c = vec![0.3, 2.0, -1.0, 0.5];
    let state = State::new(0, v_hat.clone(), vec![v_hat.clone()], c.clone()).unwrap();
    let u = ControlSignal::zero_panels(0, 256);
    for v in [solve_volterra(&k, &state, &u).unwrap(), solve_voc(&k, &state, &u).unwrap()] {
        let mut err: f64 = 0.0;
        for j in 0..=256 {
            let t = k.grid().node(j);
            for n in 0..4 {
                let exact = mode_oracle(k.mode(n).lambda, v_hat[n], c[n], t);
                err = err.max((v.row(j)[n] - exact).abs());
            }
        }
        assert!(err < 1e-4, "err {err}");
    }
}

#[test]
fn two_routes_agree_at_second_order() {
    let mut errs = Vec::new();
    for ns in [128usize, 256] {
        let k = table(8, 0.5, ns);
        let tau = ns / 8;
        let mut rng = seeded_rng(5, 1);
        let state = smooth_state(&mut rng, &k, tau).unwrap();
        let ctl = random_trig_control(&mut rng, 3.0, k.grid().node(tau));
        let u = ctl.nodal(k.grid(), tau, ns);
        let a = solve_volterra(&k, &state, &u).unwrap();
        let b = solve_voc(&k, &state, &u).unwrap();
        errs.push(a.max_abs_diff(&b));
    }
    assert!(errs[1] <= 1e-4);
    let ratio = errs[0] / errs[1];
    assert!((3.5..=4.5).contains(&ratio), "{errs:?}");
}

#[test]
fn panel_controls_agree_between_routes() {
    let k = table(8, 0.5, 128);
    let mut rng = seeded_rng(6, 1);
    let state = smooth_state(&mut rng, &k, 16).unwrap();
    let ctl = random_trig_control(&mut rng, 3.0, k.grid().node(16));
    let u = ctl.panels(k.grid(), 16, 128);
    let a = solve_volterra(&k, &state, &u).unwrap();
    let b = solve_voc(&k, &state, &u).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-3);
}

#[test]
fn solution_is_linear() {
    let k = table(6, 0.5, 64);
    let mut rng = seeded_rng(7, 1);
    let s1 = smooth_state(&mut rng, &k, 8).unwrap();
    let s2 = smooth_state(&mut rng, &k, 8).unwrap();
    let u1 = random_trig_control(&mut rng, 3.0, 0.0).panels(k.grid(), 8, 64);
    let u2 = random_trig_control(&mut rng, 3.0, 0.0).panels(k.grid(), 8, 64);
    let (a, b) = (1.7, -0.4);
    let lhs = solve_volterra(&k, &s1.combine(a, &s2, b).unwrap(), &u1.combine(a, &u2, b).unwrap()).unwrap();
    let v1 = solve_volterra(&k, &s1, &u1).unwrap();
    let v2 = solve_volterra(&k, &s2, &u2).unwrap();
    for (row, (x, y)) in lhs.rows().iter().zip(v1.rows().iter().zip(v2.rows())) {
        for n in 0..6 {
            assert!((row[n] - a * x[n] - b * y[n]).abs() < 1e-12);
        }
    }
}

#[test]
fn damped_wave_matches_memory_form() {
    let k = table(8, 0.5, 256);
    let mut rng = seeded_rng(9, 2);
    let ctl = random_trig_control(&mut rng, 3.0, 0.0);
    let (v0, v1) = wave_initial_data(&mut rng, k.basis(), &ctl);
    let wave = simulate_damped_wave(&k, &v0, &v1, &ctl).unwrap();
    let y = hat_y_from_initial(k.basis(), &v0, &v1, &ctl.value(0.0)).unwrap();
    let state = State::new(0, v0.coeffs.clone(), vec![v0.coeffs.clone()], y.coeffs).unwrap();
    let memory = solve_volterra(&k, &state, &ctl.nodal(k.grid(), 0, 256)).unwrap();
    assert!(wave.max_abs_diff(&memory) <= 5e-4);
}

#[test]
fn damped_wave_at_rest_stays_at_rest() {
    let k = table(4, 0.5, 32);
    let z = ModalVector::zeros(4);
    let ctl = SmoothControl::Polynomial { coeffs: vec![[0.0, 0.0]] };
    let w = simulate_damped_wave(&k, &z, &z, &ctl).unwrap();
    assert!(w.rows().iter().flatten().all(|x| *x == 0.0));
}

#[test]
fn forcing_seed_from_initial_data() {
    let b = SpectralBasis::new(3).unwrap();
    let v0 = ModalVector::new(vec![1.0, 0.0, 0.0]);
    let v1 = ModalVector::new(vec![0.0, 2.0, 0.0]);
    let y = hat_y_from_initial(&b, &v0, &v1, &[0.0, 0.0]).unwrap();
    assert_eq!(y.space_tag, -1.0);
    assert!((y.coeffs[0] - (-1.0 - b.lambda(0))).abs() < 1e-14);
    assert!((y.coeffs[1] - 2.0).abs() < 1e-14);
    assert!(hat_y_from_initial(&b, &ModalVector::zeros(2), &v1, &[0.0, 0.0]).is_err());
}

#[test]
fn memory_functional_exact_for_linear_history() {
    let k = table(1, 0.5, 40);
    let grid = k.grid();
    let t = grid.node(40);
    let rows: Vec<Vec<f64>> = (0..=40).map(|j| vec![2.0 + 3.0 * grid.node(j)]).collect();
    let xi = ModalField::new(0, rows).unwrap();
    let m = memory_functional(&k, &xi).unwrap();
    // ∫₀^t e^{-s} (2 + 3(t - s)) ds.
    let et = (-t).exp();
    let exact = 2.0 * (1.0 - et) + 3.0 * (t - 1.0 + et);
    assert!((m.coeffs[0] - exact).abs() < 1e-14);
    let shifted = ModalField::new(1, vec![vec![0.0]; 3]).unwrap();
    assert!(memory_functional(&k, &shifted).is_err());
}

#[test]
fn extending_a_state_is_consistent() {
    let k = table(6, 0.5, 128);
    let mut rng = seeded_rng(12, 1);
    let state = smooth_state(&mut rng, &k, 16).unwrap();
    let u = random_trig_control(&mut rng, 3.0, 0.0).nodal(k.grid(), 16, 128);
    let direct = solve_volterra(&k, &state, &u).unwrap();
    let mid = extend_state(&k, &state, &u, 64).unwrap();
    assert_eq!(mid.tau_index(), 64);
    assert_eq!(mid.compatibility_gap(), 0.0);
    let decay = (-(k.grid().node(64) - k.grid().node(16))).exp();
    for (a, b) in mid.y_hat().coeffs.iter().zip(&state.y_hat().coeffs) {
        assert!((a - decay * b).abs() < 1e-15);
    }
    let rest = solve_volterra(&k, &mid, &u.restrict(64, 128).unwrap()).unwrap();
    let mut gap: f64 = 0.0;
    for j in 0..rest.len() {
        for n in 0..6 {
            gap = gap.max((rest.row(j)[n] - direct.row(48 + j)[n]).abs());
        }
    }
    assert!(gap < 1e-4, "gap {gap}");
    assert!(extend_state(&k, &mid, &u, 10).is_err());
}

#[test]
fn mismatched_inputs_rejected() {
    let k = table(4, 0.5, 32);
    let state = State::zero(4, 4);
    assert!(solve_volterra(&k, &state, &ControlSignal::zero_panels(3, 32)).is_err());
    assert!(solve_voc(&k, &State::zero(5, 4), &ControlSignal::zero_panels(4, 32)).is_err());
    assert!(solve_volterra(&k, &state, &ControlSignal::zero_panels(4, 40)).is_err());
    let empty = ControlSignal::Nodal { start: 4, values: vec![] };
    assert!(solve_volterra(&k, &state, &empty).is_err());
    assert!(State::new(2, vec![0.0; 4], vec![vec![0.0; 4]; 2], vec![0.0; 4]).is_err());
}

#[test]
fn control_signal_algebra() {
    let p = ControlSignal::Panel { start: 2, values: vec![[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]] };
    assert_eq!(p.end(), 5);
    assert!((p.norm_sq(0.1) - 0.7).abs() < 1e-15);
    let r = p.restrict(3, 5).unwrap();
    assert_eq!(r.values(), &[[0.0, 2.0], [1.0, 1.0]]);
    assert!(p.restrict(1, 4).is_err());
    let n = ControlSignal::Nodal { start: 0, values: vec![[1.0, 1.0]; 3] };
    assert!((n.norm_sq(0.5) - 2.0).abs() < 1e-15);
    assert!(p.combine(1.0, &n, 1.0).is_err());
    let twice = p.combine(1.0, &p, 1.0).unwrap();
    assert_eq!(twice.values()[1], [0.0, 4.0]);
}

#[test]
fn smooth_control_derivatives() {
    let controls = [
        SmoothControl::Polynomial { coeffs: vec![[1.0, -1.0], [0.5, 2.0], [-3.0, 0.25], [1.0, 1.0]] },
        SmoothControl::Trigonometric {
            offset: [0.2, -0.1],
            sine: [1.0, 0.5],
            cosine: [-0.3, 0.7],
            omega: 3.0,
            origin: 0.1,
        },
    ];
    let h = 1e-4;
    for c in &controls {
        for t in [0.0, 0.2, 0.45] {
            for i in 0..2 {
                let fd1 = (c.value(t + h)[i] - c.value(t - h)[i]) / (2.0 * h);
                let fd2 = (c.value(t + h)[i] - 2.0 * c.value(t)[i] + c.value(t - h)[i]) / (h * h);
                assert!((fd1 - c.derivative(1, t)[i]).abs() < 1e-6);
                assert!((fd2 - c.derivative(2, t)[i]).abs() < 1e-4);
            }
        }
    }
}
