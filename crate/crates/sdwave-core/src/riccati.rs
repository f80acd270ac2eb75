// SPDX-License-Identifier: Apache-2.0

//! Riccati form, feedback law and the verification suites built on them.
//!
//! The value function is the quadratic form `W_ϑ(S) = ⟨P(ϑ)S, S⟩` with
//! `⟨P(ϑ)S₁, S₂⟩ = ⟨H h₁, h₂⟩`. States evolve by `S' = 𝒜S + 𝓑u` with
//!
//! `𝒜(v̂, ξ, ŷ) = ((A + I)v̂ - 𝓔ξ + ŷ, ∂ξ, -ŷ)` and `𝓑u = (-ADu, 0, 0)`,
//!
//! where `𝓔ξ = ∫₀^ϑ e^{-s} ξ(ϑ-s) ds` and `∂ξ` is the time derivative of
//! the history in forward-time storage. The time derivative of the form at
//! a frozen state is
//!
//! `⟨P'S, S⟩ = -‖v̂‖² + ‖𝓑*PS‖² - 2⟨Hh, h[𝒜S]⟩`,
//!
//! where `h[·]` maps a state triple to its free response and
//! `𝓑*PS = [Λ*Hh](ϑ)`. With these conventions the Riccati equation
//! `P' + P𝒜 + 𝒜*P - P𝓑𝓑*P + 𝒞¹*𝒞¹ = 0` holds as a quadratic-form identity,
//! and the chain rule `dW/dϑ = ⟨P'S, S⟩ + 2⟨PS, S'⟩` ties the form to the
//! values computed along trajectories.

use rayon::prelude::*;

use crate::control::{Field, OperatorAssembly, Regulator};
use crate::error::{invalid, Error, Result};
use crate::forward::{
    extend_with_trajectory, history_seed, memory_raw, solve_volterra, solve_voc, ControlSignal, ModalField, State,
    Trajectory,
};
use crate::spectral::{boundary_dot, dot, BoundaryVector, ModalVector};

/// Image `𝒜S` of a state under the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorImage {
    /// `(A + I)v̂ - 𝓔ξ + ŷ`.
    pub dv: ModalVector,
    /// Time derivative of the history, by second-order differences.
    pub dxi: ModalField,
    /// `𝓔∂ξ = ξ(ϑ) - e^{-ϑ}ξ(0) - 𝓔ξ`, integrated by parts so that it is
    /// exact for the piecewise-linear history and insensitive to corners.
    pub memory_dxi: ModalVector,
    /// `-ŷ`.
    pub dy: ModalVector,
}

/// Compatibility tolerance for `ξ(ϑ) = v̂`, relative to the state size.
const DOMAIN_TOL: f64 = 1e-10;

/// Rejects states whose history does not end at the present value.
pub fn check_domain(state: &State) -> Result<()> {
    let scale = state
        .v_hat()
        .coeffs
        .iter()
        .fold(1.0_f64, |a, b| a.max(b.abs()));
    let gap = state.compatibility_gap();
    if gap > DOMAIN_TOL * scale {
        return Err(Error::NotInDomain(format!(
            "history ends {gap:e} away from the present value"
        )));
    }
    Ok(())
}

/// Second-order differences of a history sampled with step `dt`:
/// central inside, three-point one-sided at both ends.
pub fn history_derivative(rows: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let len = rows.len();
    let nm = rows[0].len();
    let comb = |coef: &[(usize, f64)], scale: f64| -> Vec<f64> {
        (0..nm)
            .map(|n| coef.iter().map(|&(k, c)| c * rows[k][n]).sum::<f64>() * scale)
            .collect()
    };
    match len {
        1 => vec![vec![0.0; nm]],
        2 => {
            let d = comb(&[(0, -1.0), (1, 1.0)], 1.0 / dt);
            vec![d.clone(), d]
        }
        _ => (0..len)
            .map(|k| {
                if k == 0 {
                    comb(&[(0, -3.0), (1, 4.0), (2, -1.0)], 0.5 / dt)
                } else if k == len - 1 {
                    comb(&[(k, 3.0), (k - 1, -4.0), (k - 2, 1.0)], 0.5 / dt)
                } else {
                    comb(&[(k + 1, 1.0), (k - 1, -1.0)], 0.5 / dt)
                }
            })
            .collect(),
    }
}

/// Applies the generator `𝒜` to a state in its discrete domain.
pub fn apply_generator(reg: &Regulator, state: &State) -> Result<GeneratorImage> {
    check_domain(state)?;
    let kernels = reg.kernels();
    let basis = kernels.basis();
    let mem = memory_raw(kernels, state.xi().rows());
    let ap = basis.apply_a_plus_i(&state.v_hat().coeffs);
    let dv = ap
        .iter()
        .zip(&mem)
        .zip(&state.y_hat().coeffs)
        .map(|((a, m), y)| a - m + y)
        .collect();
    let dxi = ModalField::new(0, history_derivative(state.xi().rows(), kernels.grid().dt()))?;
    let dy = state.y_hat().coeffs.iter().map(|y| -y).collect();
    let first = state.xi().row(0);
    let decay = kernels.decay(state.tau_index());
    let memory_dxi = (0..state.n_modes())
        .map(|n| state.v_hat().coeffs[n] - decay * first[n] - mem[n])
        .collect();
    Ok(GeneratorImage {
        dv: ModalVector::with_tag(dv, -1.0),
        dxi,
        memory_dxi: ModalVector::new(memory_dxi),
        dy: ModalVector::with_tag(dy, -1.0),
    })
}

/// Free response `h[𝒜S] = Z a + G(b - 𝓔η)` of the generator image
/// `(a, η, b)`.
fn generator_response(assembly: &OperatorAssembly, image: &GeneratorImage) -> Field {
    let seed: Vec<f64> = image
        .dy
        .coeffs
        .iter()
        .zip(&image.memory_dxi.coeffs)
        .map(|(y, m)| y - m)
        .collect();
    assembly.free_response(&image.dv.coeffs, &seed)
}

/// `⟨P(ϑ)S, 𝒜S⟩` with `H` applied to the free response of `𝒜S`.
pub fn p_form_generator(reg: &Regulator, state: &State, image: &GeneratorImage) -> Result<f64> {
    let assembly = reg.assembly(state.tau_index())?;
    let h = assembly.build_h(state)?;
    let ha = generator_response(&assembly, image);
    let hha = reg.apply_h(&assembly, &ha)?;
    Ok(assembly.inner(&h, &hha))
}

/// Terms of the time derivative of the Riccati form at a frozen state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PPrimeTerms {
    /// `‖v̂‖²`.
    pub present_sq: f64,
    /// `‖𝓑*PS‖²`.
    pub gain_sq: f64,
    /// `⟨Hh, h[𝒜S]⟩`.
    pub generator_pairing: f64,
    /// `𝓑*PS`.
    pub gain: BoundaryVector,
    /// `⟨P'S, S⟩ = -‖v̂‖² + ‖𝓑*PS‖² - 2⟨Hh, h[𝒜S]⟩`.
    pub value: f64,
}

/// `𝓑*P(ϑ)S = [Λ*Hh](ϑ)`, evaluated at the node `ϑ`.
///
/// `Hh = h + Λu⁺` is the optimal trajectory, so the value follows from the
/// state and the optimal panel control.
pub fn adjoint_gain(reg: &Regulator, state: &State) -> Result<BoundaryVector> {
    let assembly = reg.assembly(state.tau_index())?;
    let u = reg.optimal_control(state)?;
    let seed = history_seed(reg.kernels(), state);
    assembly.lambda_star_at_start(&state.v_hat().coeffs, &seed, u.values())
}

/// Evaluates `⟨P'(ϑ)S, S⟩`.
pub fn p_prime_form(reg: &Regulator, state: &State) -> Result<PPrimeTerms> {
    let image = apply_generator(reg, state)?;
    let assembly = reg.assembly(state.tau_index())?;
    let h = assembly.build_h(state)?;
    let hh = reg.apply_h(&assembly, &h)?;
    let a = adjoint_gain(reg, state)?;
    let ha = generator_response(&assembly, &image);
    let present_sq = dot(&state.v_hat().coeffs, &state.v_hat().coeffs);
    let gain_sq = boundary_dot(&a, &a);
    let generator_pairing = assembly.inner(&hh, &ha);
    Ok(PPrimeTerms {
        present_sq,
        gain_sq,
        generator_pairing,
        gain: a,
        value: -present_sq + gain_sq - 2.0 * generator_pairing,
    })
}

/// Riccati residual at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiResidual {
    /// Node index.
    pub node: usize,
    /// `⟨P'S, S⟩ + 2⟨PS, 𝒜S⟩ - ‖𝓑*PS‖² + ‖v̂‖²`.
    pub absolute: f64,
    /// `absolute / ‖S‖²`.
    pub relative: f64,
}

/// Residual of the Riccati equation as a quadratic form at `state`.
///
/// The cross term `⟨PS, 𝒜S⟩` applies `H` to `h[𝒜S]`, while `⟨P'S, S⟩`
/// applies it to `h`, so the two sides are evaluated by different routes.
pub fn riccati_residual(reg: &Regulator, state: &State) -> Result<RiccatiResidual> {
    let ns = reg.kernels().grid().n_steps();
    if state.tau_index() == ns {
        return Err(invalid("state", "the terminal node is covered by the terminal check"));
    }
    let pp = p_prime_form(reg, state)?;
    let image = apply_generator(reg, state)?;
    let cross = p_form_generator(reg, state, &image)?;
    let absolute = pp.value + 2.0 * cross - pp.gain_sq + pp.present_sq;
    let norm = state.norm_sq(reg.kernels().basis(), reg.kernels().grid().dt());
    Ok(RiccatiResidual {
        node: state.tau_index(),
        absolute: absolute.abs(),
        relative: if norm > 0.0 { absolute.abs() / norm } else { absolute.abs() },
    })
}

/// `⟨P(T)S, S⟩` for a state at the final node; the integration range is
/// empty, so the value is exactly zero.
pub fn terminal_p_check(reg: &Regulator, state: &State) -> Result<f64> {
    if state.tau_index() != reg.kernels().grid().n_steps() {
        return Err(invalid("state", "the terminal check needs a state at T"));
    }
    reg.p_form(state, state)
}

/// `u(t_j) = gain(t_j, S(t_j))`, the feedback law on the panel `[t_j, t_{j+1}]`.
pub fn feedback_gain(reg: &Regulator, state: &State) -> Result<BoundaryVector> {
    reg.feedback_gain(state)
}

/// Closed-loop run of the feedback law from `state0` to `T`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    /// Trajectory on `[τ, T]`.
    pub trajectory: Trajectory,
    /// Applied panel control.
    pub control: ControlSignal,
}

/// Applies the feedback gain on each panel, advancing the state one panel at
/// a time with [`solve_volterra`].
pub fn closed_loop_simulate(reg: &Regulator, state0: &State) -> Result<ClosedLoop> {
    check_domain(state0)?;
    let kernels = reg.kernels();
    let ns = kernels.grid().n_steps();
    let tau = state0.tau_index();
    let mut state = state0.clone();
    let mut rows = vec![state0.v_hat().coeffs.clone()];
    let mut values = Vec::with_capacity(ns - tau);
    for j in tau..ns {
        let g = reg.feedback_gain(&state)?;
        let u = ControlSignal::Panel {
            start: j,
            values: vec![g],
        };
        let step = solve_volterra(kernels, &state, &u)?;
        state = extend_with_trajectory(kernels, &state, &step, j + 1)?;
        rows.push(step.row(1).to_vec());
        values.push(g);
    }
    Ok(ClosedLoop {
        trajectory: ModalField::new(tau, rows)?,
        control: ControlSignal::Panel { start: tau, values },
    })
}

/// Restart consistency at an intermediate node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellmanReport {
    /// Restart node.
    pub t0: usize,
    /// `‖u⁺_{t0} - u⁺_τ‖_{L²(t0, T)}`.
    pub tail_l2: f64,
    /// Largest panel deviation of the restarted control.
    pub tail_max: f64,
    /// `|W_τ - ∫_τ^{t0}(‖v⁺‖² + ‖u⁺‖²) - W_{t0}(S⁺(t0))|`.
    pub telescoping: f64,
    /// `W_τ`.
    pub value: f64,
}

/// Compares the optimal solution from `state` with the one restarted at
/// `t0` from the optimally reached state.
pub fn bellman_check(reg: &Regulator, state: &State, t0: usize) -> Result<BellmanReport> {
    let kernels = reg.kernels();
    let tau = state.tau_index();
    let ns = kernels.grid().n_steps();
    if t0 < tau || t0 > ns {
        return Err(invalid("t0", format!("node {t0} outside [{tau}, {ns}]")));
    }
    let dt = kernels.grid().dt();
    let u = reg.optimal_control(state)?;
    let v = solve_voc(kernels, state, &u)?;
    let value = v.norm_sq(dt) + u.norm_sq(dt);
    let reached = extend_with_trajectory(kernels, state, &v, t0)?;
    let u1 = reg.optimal_control(&reached)?;
    let w1 = reg.value(&reached)?;
    let k = t0 - tau;
    let head_v = ModalField::new(tau, v.rows()[..=k].to_vec())?;
    let head_u = u.restrict(tau, t0)?;
    let running = head_v.norm_sq(dt) + head_u.norm_sq(dt);
    let mut sq = 0.0;
    let mut max = 0.0_f64;
    for (a, b) in u1.values().iter().zip(&u.values()[k..]) {
        let d = [a[0] - b[0], a[1] - b[1]];
        sq += dt * boundary_dot(&d, &d);
        max = max.max(d[0].abs()).max(d[1].abs());
    }
    Ok(BellmanReport {
        t0,
        tail_l2: sq.sqrt(),
        tail_max: max,
        telescoping: (value - running - w1).abs(),
        value,
    })
}

/// Values along a trajectory and the dissipation residuals derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationScan {
    /// First node of the scan.
    pub start: usize,
    /// `W_ϑ(S(ϑ))` at every node from `τ` to `T`.
    pub values: Vec<f64>,
    /// Central difference of the values at interior nodes, one-sided at the
    /// ends.
    pub derivative: Vec<f64>,
    /// `r(ϑ) = ‖v(ϑ)‖² + ‖u(ϑ)‖² + dW/dϑ` at every node.
    pub residual: Vec<f64>,
}

impl DissipationScan {
    /// Residuals at interior nodes only.
    pub fn interior(&self) -> &[f64] {
        let n = self.residual.len();
        if n < 3 {
            &[]
        } else {
            &self.residual[1..n - 1]
        }
    }
}

/// States along a trajectory from `state`, one per node to the end of the
/// trajectory.
pub fn states_along(reg: &Regulator, state: &State, v: &Trajectory) -> Result<Vec<State>> {
    (v.start()..=v.end())
        .into_par_iter()
        .map(|j| extend_with_trajectory(reg.kernels(), state, v, j))
        .collect()
}

/// Differentiates `ϑ ↦ W_ϑ(S(ϑ))` along the trajectory driven by the panel
/// control `u` and forms the dissipation residual.
///
/// At a node the squared control is the mean of the squares on the two
/// adjacent panels, matching the central difference of the values.
pub fn dissipation_scan(reg: &Regulator, state: &State, u: &ControlSignal) -> Result<DissipationScan> {
    check_domain(state)?;
    let panels = match u {
        ControlSignal::Panel { start, values } if *start == state.tau_index() => values,
        _ => return Err(invalid("u", "the scan needs a panel control starting at τ")),
    };
    let kernels = reg.kernels();
    if u.end() != kernels.grid().n_steps() {
        return Err(invalid("u", "the scan needs a control up to T"));
    }
    let dt = kernels.grid().dt();
    let v = solve_voc(kernels, state, u)?;
    let states = states_along(reg, state, &v)?;
    let values = states
        .par_iter()
        .map(|s| reg.value(s))
        .collect::<Result<Vec<_>>>()?;
    let n = values.len();
    let derivative = central_difference(&values, dt);
    let usq: Vec<f64> = panels.iter().map(|x| boundary_dot(x, x)).collect();
    let residual = (0..n)
        .map(|k| {
            let uk = if n == 1 {
                0.0
            } else if k == 0 {
                usq[0]
            } else if k == n - 1 {
                usq[n - 2]
            } else {
                0.5 * (usq[k - 1] + usq[k])
            };
            dot(v.row(k), v.row(k)) + uk + derivative[k]
        })
        .collect();
    Ok(DissipationScan {
        start: state.tau_index(),
        values,
        derivative,
        residual,
    })
}

fn central_difference(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|k| {
            if n == 1 {
                0.0
            } else if k == 0 {
                (values[1] - values[0]) / dt
            } else if k == n - 1 {
                (values[n - 1] - values[n - 2]) / dt
            } else {
                (values[k + 1] - values[k - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

/// Chain-rule closure at one interior node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureReport {
    /// Node index.
    pub node: usize,
    /// Central difference of `W_ϑ(S(ϑ))`.
    pub dw_fd: f64,
    /// `⟨P'S, S⟩ + 2⟨PS, S'⟩` with `S' = 𝒜S + 𝓑u(ϑ)`.
    pub predicted: f64,
    /// `|dw_fd - predicted| / (‖S‖² + ‖u(ϑ)‖²)`.
    pub relative: f64,
    /// `⟨P'S, S⟩`.
    pub p_prime: f64,
}

/// Checks `dW/dϑ = ⟨P'S, S⟩ + 2⟨PS, S'⟩` along the trajectory driven by
/// `u`, at every interior node.
///
/// `S' = 𝒜S + 𝓑u(ϑ)` comes from the state equation. Nodal controls are
/// read at the node, panel controls are averaged over the two adjacent
/// panels.
pub fn chain_rule_scan(reg: &Regulator, state: &State, u: &ControlSignal) -> Result<Vec<ClosureReport>> {
    check_domain(state)?;
    let kernels = reg.kernels();
    if u.start() != state.tau_index() || u.end() != kernels.grid().n_steps() {
        return Err(invalid("u", "the scan needs a control on [τ, T]"));
    }
    let dt = kernels.grid().dt();
    let v = solve_voc(kernels, state, u)?;
    let states = states_along(reg, state, &v)?;
    let values = states
        .par_iter()
        .map(|s| reg.value(s))
        .collect::<Result<Vec<_>>>()?;
    let n = values.len();
    let u_at = |k: usize| -> BoundaryVector {
        match u {
            ControlSignal::Nodal { values, .. } => values[k],
            ControlSignal::Panel { values, .. } => {
                let a = values[k.saturating_sub(1)];
                let b = values[k.min(values.len() - 1)];
                [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
            }
        }
    };
    (1..n.saturating_sub(1))
        .into_par_iter()
        .map(|k| {
            let s = &states[k];
            let assembly = reg.assembly(s.tau_index())?;
            let h = assembly.build_h(s)?;
            let hh = reg.apply_h(&assembly, &h)?;
            let pp = p_prime_form(reg, s)?;
            let image = apply_generator(reg, s)?;
            let uk = u_at(k);
            // S' = 𝒜S + 𝓑u. The control part pairs through the node adjoint,
            // ⟨PS, 𝓑u⟩ = u·𝓑*PS, which resolves the boundary layer of Hh.
            let hs = generator_response(&assembly, &image);
            let predicted = pp.value + 2.0 * assembly.inner(&hh, &hs) + 2.0 * boundary_dot(&uk, &pp.gain);
            let dw_fd = (values[k + 1] - values[k - 1]) / (2.0 * dt);
            let scale = s.norm_sq(kernels.basis(), dt) + boundary_dot(&uk, &uk);
            Ok(ClosureReport {
                node: s.tau_index(),
                dw_fd,
                predicted,
                relative: if scale > 0.0 { (dw_fd - predicted).abs() / scale } else { (dw_fd - predicted).abs() },
                p_prime: pp.value,
            })
        })
        .collect()
}
