// SPDX-License-Identifier: Apache-2.0

//! States, controls and the forward solvers of the memory equation.
//!
//! Starting at a grid node `τ` with state `(v̂, ξ, ŷ)`, the solution obeys
//!
//! `v(t) = e^{A(t-τ)}v̂ + ∫_τ^t e^{A(t-s)} e^{-(s-τ)} c ds
//!         - ∫_τ^t e^{A(t-s)} ADu(s) ds + ∫_τ^t N(t-s) v(s) ds`,
//!
//! where `c = ŷ - ∫₀^τ e^{-ν} ξ(τ-ν) dν` collects the history. The same
//! solution is also given in closed form by the resolvent,
//!
//! `v(t) = Z(t-τ)v̂ + ∫_τ^t Z(t-s) e^{-(s-τ)} c ds - ∫_τ^t Z(t-s) ADu(s) ds`.
//!
//! [`solve_volterra`] discretizes the first form and [`solve_voc`] the
//! second; they share no code beyond the kernel tables, so their agreement
//! is a genuine cross-check. [`simulate_damped_wave`] integrates the
//! original second-order equation directly.
//!
//! Histories are stored in forward time: `ξ` holds samples at the nodes
//! `t_0, …, t_τ`, and the reversed argument `ξ(τ - ν)` is formed inside the
//! integrals.

use rayon::prelude::*;

use crate::error::{check_len, invalid, Error, Result};
use crate::kernels::{trapezoid_weights, KernelTable, ProductWeights, TimeGrid};
use crate::spectral::{boundary_dot, dot, BoundaryVector, ModalVector, SpectralBasis};

/// Time-indexed family of modal vectors on consecutive grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalField {
    start: usize,
    rows: Vec<Vec<f64>>,
}

/// Solution of the memory equation on `[τ, t_end]`.
pub type Trajectory = ModalField;

impl ModalField {
    /// Wraps `rows[k]`, the coefficients at node `start + k`.
    pub fn new(start: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(invalid("rows", "a field needs at least one node"));
        }
        let n = rows[0].len();
        for r in &rows {
            check_len("modal field row", n, r.len())?;
        }
        Ok(Self { start, rows })
    }

    /// First node index.
    pub fn start(&self) -> usize {
        self.start
    }

    /// Last node index.
    pub fn end(&self) -> usize {
        self.start + self.rows.len() - 1
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Always false: a field has at least one node.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of modes.
    pub fn n_modes(&self) -> usize {
        self.rows[0].len()
    }

    /// Coefficients at the `k`-th stored node (node `start + k`).
    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    /// Coefficients at absolute node `j`.
    pub fn at_node(&self, j: usize) -> &[f64] {
        &self.rows[j - self.start]
    }

    /// All rows.
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Trapezoidal `∫ ‖f(t)‖²_H dt` over the stored nodes.
    pub fn norm_sq(&self, dt: f64) -> f64 {
        trapezoid_weights(self.rows.len() - 1, dt)
            .iter()
            .zip(&self.rows)
            .map(|(q, r)| q * dot(r, r))
            .sum()
    }

    /// Largest coefficient deviation from another field on the same nodes.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// The state `(v̂, ξ, ŷ)` at a grid node `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    tau_index: usize,
    v_hat: ModalVector,
    xi: ModalField,
    y_hat: ModalVector,
}

impl State {
    /// Builds a state at node `tau_index`; `xi` must hold `tau_index + 1`
    /// samples starting at node 0.
    pub fn new(tau_index: usize, v_hat: Vec<f64>, xi: Vec<Vec<f64>>, y_hat: Vec<f64>) -> Result<Self> {
        let n = v_hat.len();
        check_len("history length", tau_index + 1, xi.len())?;
        check_len("forcing seed", n, y_hat.len())?;
        let xi = ModalField::new(0, xi)?;
        check_len("history modes", n, xi.n_modes())?;
        Ok(Self {
            tau_index,
            v_hat: ModalVector::new(v_hat),
            xi,
            y_hat: ModalVector::with_tag(y_hat, -1.0),
        })
    }

    /// Zero state at node `tau_index`.
    pub fn zero(n_modes: usize, tau_index: usize) -> Self {
        Self {
            tau_index,
            v_hat: ModalVector::zeros(n_modes),
            xi: ModalField {
                start: 0,
                rows: vec![vec![0.0; n_modes]; tau_index + 1],
            },
            y_hat: ModalVector::with_tag(vec![0.0; n_modes], -1.0),
        }
    }

    /// Node index of `τ`.
    pub fn tau_index(&self) -> usize {
        self.tau_index
    }

    /// Present value `v̂`.
    pub fn v_hat(&self) -> &ModalVector {
        &self.v_hat
    }

    /// History `ξ` on `[0, τ]`.
    pub fn xi(&self) -> &ModalField {
        &self.xi
    }

    /// Forcing seed `ŷ`.
    pub fn y_hat(&self) -> &ModalVector {
        &self.y_hat
    }

    /// Number of modes.
    pub fn n_modes(&self) -> usize {
        self.v_hat.len()
    }

    /// `α·self + β·other` for states at the same node.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if self.tau_index != other.tau_index {
            return Err(invalid("other", "states live at different nodes"));
        }
        check_len("state modes", self.n_modes(), other.n_modes())?;
        let lin = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| alpha * x + beta * y).collect()
        };
        Ok(Self {
            tau_index: self.tau_index,
            v_hat: ModalVector::new(lin(&self.v_hat.coeffs, &other.v_hat.coeffs)),
            xi: ModalField {
                start: 0,
                rows: self
                    .xi
                    .rows
                    .iter()
                    .zip(&other.xi.rows)
                    .map(|(a, b)| lin(a, b))
                    .collect(),
            },
            y_hat: ModalVector::with_tag(lin(&self.y_hat.coeffs, &other.y_hat.coeffs), -1.0),
        })
    }

    /// `α·self`.
    pub fn scaled(&self, alpha: f64) -> Self {
        self.combine(alpha, self, 0.0)
            .expect("a state is compatible with itself")
    }

    /// State-space norm `‖v̂‖² + ∫₀^τ ‖ξ‖² + ‖A⁻¹ŷ‖²`.
    pub fn norm_sq(&self, basis: &SpectralBasis, dt: f64) -> f64 {
        self.v_hat.dot(&self.v_hat) + self.xi.norm_sq(dt) + basis.dual_norm_sq(&self.y_hat.coeffs)
    }

    /// Largest deviation between `ξ(τ)` and `v̂`.
    pub fn compatibility_gap(&self) -> f64 {
        self.xi
            .row(self.tau_index)
            .iter()
            .zip(&self.v_hat.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Boundary control on `[t_start, t_end]`.
///
/// `Nodal` samples are interpolated linearly between nodes. `Panel` values
/// are constant on each panel `[t_{start+p}, t_{start+p+1}]`; the optimal
/// control problem is posed over this class.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSignal {
    /// Values at nodes `start, …, start + values.len() - 1`.
    Nodal {
        /// First node index.
        start: usize,
        /// Samples at consecutive nodes.
        values: Vec<BoundaryVector>,
    },
    /// Values on panels `start, …, start + values.len() - 1`.
    Panel {
        /// First node index.
        start: usize,
        /// One value per panel.
        values: Vec<BoundaryVector>,
    },
}

impl ControlSignal {
    /// Zero panel control on `[t_start, t_end]`.
    pub fn zero_panels(start: usize, end: usize) -> Self {
        Self::Panel {
            start,
            values: vec![[0.0; 2]; end.saturating_sub(start)],
        }
    }

    /// First node index.
    pub fn start(&self) -> usize {
        match self {
            Self::Nodal { start, .. } | Self::Panel { start, .. } => *start,
        }
    }

    /// Number of panels covered.
    pub fn n_panels(&self) -> usize {
        match self {
            Self::Nodal { values, .. } => values.len().saturating_sub(1),
            Self::Panel { values, .. } => values.len(),
        }
    }

    /// Last node index.
    pub fn end(&self) -> usize {
        self.start() + self.n_panels()
    }

    /// Stored samples.
    pub fn values(&self) -> &[BoundaryVector] {
        match self {
            Self::Nodal { values, .. } | Self::Panel { values, .. } => values,
        }
    }

    /// `∫ ‖u‖²` (trapezoidal for nodal samples, exact for panels).
    pub fn norm_sq(&self, dt: f64) -> f64 {
        match self {
            Self::Nodal { values, .. } => trapezoid_weights(values.len().saturating_sub(1), dt)
                .iter()
                .zip(values)
                .map(|(q, u)| q * boundary_dot(u, u))
                .sum(),
            Self::Panel { values, .. } => dt * values.iter().map(|u| boundary_dot(u, u)).sum::<f64>(),
        }
    }

    /// The same control restricted to `[t_from, t_to]`.
    pub fn restrict(&self, from: usize, to: usize) -> Result<Self> {
        if from < self.start() || to > self.end() || from > to {
            return Err(invalid("range", format!("[{from}, {to}] outside the control support")));
        }
        let a = from - self.start();
        let b = to - self.start();
        Ok(match self {
            Self::Nodal { values, .. } => Self::Nodal {
                start: from,
                values: values[a..=b].to_vec(),
            },
            Self::Panel { values, .. } => Self::Panel {
                start: from,
                values: values[a..b].to_vec(),
            },
        })
    }

    /// `α·self + β·other` for controls of the same kind and support.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        let same_kind = matches!(
            (self, other),
            (Self::Nodal { .. }, Self::Nodal { .. }) | (Self::Panel { .. }, Self::Panel { .. })
        );
        if !same_kind || self.start() != other.start() || self.n_panels() != other.n_panels() {
            return Err(invalid("other", "controls differ in kind or support"));
        }
        let values = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(a, b)| [alpha * a[0] + beta * b[0], alpha * a[1] + beta * b[1]])
            .collect();
        Ok(match self {
            Self::Nodal { start, .. } => Self::Nodal { start: *start, values },
            Self::Panel { start, .. } => Self::Panel { start: *start, values },
        })
    }

    /// `∫_{t_start}^{t_i} k(t_i - s) (d·u)(s) ds` for a kernel with product
    /// weights `w`, where `du[k] = d·u_k` are the projected samples and `i`
    /// counts panels from the start.
    fn kernel_integral(&self, w: &ProductWeights, du: &[f64], i: usize) -> f64 {
        match self {
            Self::Nodal { .. } => w.integrate(i, |m| du[i - m]),
            Self::Panel { .. } => (0..i).map(|p| w.panel[i - p - 1] * du[p]).sum(),
        }
    }
}

/// Smooth boundary control with analytic first and second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothControl {
    /// `u(t) = Σ_k c_k t^k`.
    Polynomial {
        /// Coefficients `c_0, c_1, …`.
        coeffs: Vec<BoundaryVector>,
    },
    /// `u(t) = offset + sine·sin(ω(t-t₀)) + cosine·cos(ω(t-t₀))`.
    Trigonometric {
        /// Constant part.
        offset: BoundaryVector,
        /// Sine amplitude.
        sine: BoundaryVector,
        /// Cosine amplitude.
        cosine: BoundaryVector,
        /// Angular frequency `ω`.
        omega: f64,
        /// Phase origin `t₀`.
        origin: f64,
    },
}

impl SmoothControl {
    /// `u^{(order)}(t)` for `order ∈ {0, 1, 2}`.
    pub fn derivative(&self, order: usize, t: f64) -> BoundaryVector {
        match self {
            Self::Polynomial { coeffs } => {
                let mut out = [0.0; 2];
                for (k, c) in coeffs.iter().enumerate().skip(order) {
                    let falling: f64 = (0..order).map(|i| (k - i) as f64).product();
                    let p = falling * t.powi((k - order) as i32);
                    out[0] += c[0] * p;
                    out[1] += c[1] * p;
                }
                out
            }
            Self::Trigonometric {
                offset,
                sine,
                cosine,
                omega,
                origin,
            } => {
                let x = omega * (t - origin);
                let (s, c) = x.sin_cos();
                let (fs, fc, base) = match order {
                    0 => (s, c, 1.0),
                    1 => (c * omega, -s * omega, 0.0),
                    _ => (-s * omega * omega, -c * omega * omega, 0.0),
                };
                [
                    base * offset[0] + sine[0] * fs + cosine[0] * fc,
                    base * offset[1] + sine[1] * fs + cosine[1] * fc,
                ]
            }
        }
    }

    /// `u(t)`.
    pub fn value(&self, t: f64) -> BoundaryVector {
        self.derivative(0, t)
    }

    /// Nodal samples on `[t_start, t_end]`.
    pub fn nodal(&self, grid: &TimeGrid, start: usize, end: usize) -> ControlSignal {
        ControlSignal::Nodal {
            start,
            values: (start..=end).map(|j| self.value(grid.node(j))).collect(),
        }
    }

    /// Panel values at the panel midpoints of `[t_start, t_end]`.
    pub fn panels(&self, grid: &TimeGrid, start: usize, end: usize) -> ControlSignal {
        let dt = grid.dt();
        ControlSignal::Panel {
            start,
            values: (start..end)
                .map(|j| self.value(grid.node(j) + 0.5 * dt))
                .collect(),
        }
    }
}

/// `ŷ = v₁ - v₀ - A(v₀ - D u_trace)`: the forcing seed generated by initial
/// data `(v₀, v₁)` whose boundary trace is `u_trace`.
pub fn hat_y_from_initial(
    basis: &SpectralBasis,
    v0: &ModalVector,
    v1: &ModalVector,
    u_trace: &BoundaryVector,
) -> Result<ModalVector> {
    check_len("v0", basis.n_modes(), v0.len())?;
    check_len("v1", basis.n_modes(), v1.len())?;
    let du = basis.dirichlet_map(u_trace);
    let coeffs = (0..basis.n_modes())
        .map(|n| {
            let w0 = v0.coeffs[n] - du.coeffs[n];
            v1.coeffs[n] - v0.coeffs[n] - basis.lambda(n) * w0
        })
        .collect();
    Ok(ModalVector::with_tag(coeffs, -1.0))
}

/// `∫₀^t e^{-s} ξ(t-s) ds` for a history sampled on `[0, t]` starting at
/// node 0, exact for piecewise-linear histories.
pub fn memory_functional(kernels: &KernelTable, xi: &ModalField) -> Result<ModalVector> {
    if xi.start() != 0 {
        return Err(invalid("xi", "histories must start at node 0"));
    }
    check_len("history modes", kernels.n_modes(), xi.n_modes())?;
    if xi.end() > kernels.grid().n_steps() {
        return Err(invalid("xi", "history extends beyond the kernel grid"));
    }
    Ok(ModalVector::new(memory_raw(kernels, xi.rows())))
}

pub(crate) fn memory_raw(kernels: &KernelTable, rows: &[Vec<f64>]) -> Vec<f64> {
    let i = rows.len() - 1;
    let w = kernels.memory_weights();
    (0..rows[0].len())
        .map(|n| w.integrate(i, |m| rows[i - m][n]))
        .collect()
}

fn check_problem(kernels: &KernelTable, state: &State, u: &ControlSignal) -> Result<()> {
    check_len("state modes", kernels.n_modes(), state.n_modes())?;
    if u.start() != state.tau_index() {
        return Err(invalid("u", "control must start at the state node"));
    }
    if u.end() > kernels.grid().n_steps() {
        return Err(invalid("u", "control extends beyond the kernel grid"));
    }
    if let ControlSignal::Nodal { values, .. } = u {
        if values.is_empty() {
            return Err(invalid("u", "nodal controls need at least one sample"));
        }
    }
    Ok(())
}

/// Runs `f(mode, projected control)` for every mode in parallel and
/// transposes the per-mode columns into node rows.
fn modal_columns(
    kernels: &KernelTable,
    u: &ControlSignal,
    start: usize,
    f: impl Fn(usize, &[f64]) -> Result<Vec<f64>> + Sync,
) -> Result<Trajectory> {
    let basis = kernels.basis();
    let columns = (0..kernels.n_modes())
        .into_par_iter()
        .map(|n| {
            let d = basis.dmap(n);
            let du: Vec<f64> = u.values().iter().map(|x| boundary_dot(&d, x)).collect();
            f(n, &du)
        })
        .collect::<Result<Vec<_>>>()?;
    let len = columns[0].len();
    let rows = (0..len)
        .map(|k| columns.iter().map(|c| c[k]).collect())
        .collect();
    ModalField::new(start, rows)
}

/// Solves the memory equation as a Volterra equation of the second kind.
///
/// The history, forcing and control terms are integrated in closed form or
/// with product weights of `e^{At}`; the memory convolution with `N` uses the
/// trapezoidal rule with the diagonal term solved implicitly.
pub fn solve_volterra(kernels: &KernelTable, state: &State, u: &ControlSignal) -> Result<Trajectory> {
    check_problem(kernels, state, u)?;
    let dt = kernels.grid().dt();
    let len = u.n_panels() + 1;
    let c = history_seed(kernels, state);
    modal_columns(kernels, u, state.tau_index(), |n, du| {
        let m = kernels.mode(n);
        let coefficient = 1.0 - 0.5 * dt * m.n[0];
        if coefficient.abs() < 1e-12 {
            return Err(Error::DegenerateStep {
                mode: n + 1,
                coefficient,
            });
        }
        let vh = state.v_hat.coeffs[n];
        let mut v = vec![0.0; len];
        for i in 0..len {
            let f = m.e[i] * vh + m.psi[i] * c[n] - m.lambda * u.kernel_integral(&m.we, du, i);
            if i == 0 {
                v[0] = f;
                continue;
            }
            let s = 0.5 * m.n[i] * v[0] + (1..i).map(|k| m.n[i - k] * v[k]).sum::<f64>();
            v[i] = (f + dt * s) / coefficient;
        }
        Ok(v)
    })
}

/// Evaluates the variation-of-constants formula built on the resolvent `Z`.
pub fn solve_voc(kernels: &KernelTable, state: &State, u: &ControlSignal) -> Result<Trajectory> {
    check_problem(kernels, state, u)?;
    let len = u.n_panels() + 1;
    let c = history_seed(kernels, state);
    modal_columns(kernels, u, state.tau_index(), |n, du| {
        let m = kernels.mode(n);
        let vh = state.v_hat.coeffs[n];
        Ok((0..len)
            .map(|i| m.z[i] * vh + m.g[i] * c[n] - m.lambda * u.kernel_integral(&m.wz, du, i))
            .collect())
    })
}

/// `c = ŷ - ∫₀^τ e^{-ν} ξ(τ-ν) dν`.
pub(crate) fn history_seed(kernels: &KernelTable, state: &State) -> Vec<f64> {
    let mem = memory_raw(kernels, state.xi.rows());
    state
        .y_hat
        .coeffs
        .iter()
        .zip(&mem)
        .map(|(y, m)| y - m)
        .collect()
}

/// Integrates `v'' = Δv + Δv'` with `v = u` on the boundary from `t = 0`.
///
/// The lifted unknown `w = v - Du` satisfies `w'' = A(w + w') - Du''` mode by
/// mode; each mode is advanced by the Crank–Nicolson rule, which is A-stable
/// and second order. `v0` and `v1` are the modal coefficients of `v(0)` and
/// `v'(0)`, including their harmonic parts.
pub fn simulate_damped_wave(
    kernels: &KernelTable,
    v0: &ModalVector,
    v1: &ModalVector,
    control: &SmoothControl,
) -> Result<Trajectory> {
    let basis = kernels.basis();
    check_len("v0", basis.n_modes(), v0.len())?;
    check_len("v1", basis.n_modes(), v1.len())?;
    let grid = kernels.grid();
    let dt = grid.dt();
    let nodes = grid.nodes();
    let u: Vec<BoundaryVector> = nodes.iter().map(|&t| control.value(t)).collect();
    let upp: Vec<BoundaryVector> = nodes.iter().map(|&t| control.derivative(2, t)).collect();
    let up0 = control.derivative(1, 0.0);
    let columns: Vec<Vec<f64>> = (0..basis.n_modes())
        .into_par_iter()
        .map(|n| {
            let lam = basis.lambda(n);
            let d = basis.dmap(n);
            let du: Vec<f64> = u.iter().map(|x| boundary_dot(&d, x)).collect();
            let dupp: Vec<f64> = upp.iter().map(|x| boundary_dot(&d, x)).collect();
            // (I - dt/2 M)^{-1} for M = [[0, 1], [λ, λ]].
            let h = 0.5 * dt;
            let (a, b, c, e) = (1.0, -h, -h * lam, 1.0 - h * lam);
            let det = a * e - b * c;
            let inv = [[e / det, -b / det], [-c / det, a / det]];
            let mut w = [v0.coeffs[n] - du[0], v1.coeffs[n] - boundary_dot(&d, &up0)];
            let mut out = Vec::with_capacity(nodes.len());
            out.push(w[0] + du[0]);
            for i in 0..grid.n_steps() {
                let r0 = w[0] + h * w[1];
                let r1 = w[1] + h * lam * (w[0] + w[1]) - h * (dupp[i] + dupp[i + 1]);
                w = [
                    inv[0][0] * r0 + inv[0][1] * r1,
                    inv[1][0] * r0 + inv[1][1] * r1,
                ];
                out.push(w[0] + du[i + 1]);
            }
            out
        })
        .collect();
    let rows = (0..nodes.len())
        .map(|k| columns.iter().map(|c| c[k]).collect())
        .collect();
    ModalField::new(0, rows)
}

/// Advances a state along a known trajectory: the result at node `t1` has
/// `v̂ = v(t₁)`, the history extended by `v` on `[τ, t₁]`, and
/// `ŷ = e^{-(t₁-τ)}ŷ_τ`.
pub fn extend_with_trajectory(
    kernels: &KernelTable,
    state: &State,
    trajectory: &Trajectory,
    t1: usize,
) -> Result<State> {
    let tau = state.tau_index();
    if trajectory.start() != tau {
        return Err(invalid("trajectory", "must start at the state node"));
    }
    if t1 < tau || t1 > trajectory.end() {
        return Err(invalid("t1", format!("node {t1} outside [{tau}, {}]", trajectory.end())));
    }
    check_len("trajectory modes", state.n_modes(), trajectory.n_modes())?;
    let k = t1 - tau;
    let mut rows = state.xi.rows.clone();
    rows.extend(trajectory.rows()[1..=k].iter().cloned());
    let decay = kernels.decay(k);
    Ok(State {
        tau_index: t1,
        v_hat: ModalVector::new(trajectory.row(k).to_vec()),
        xi: ModalField { start: 0, rows },
        y_hat: ModalVector::with_tag(state.y_hat.coeffs.iter().map(|y| decay * y).collect(), -1.0),
    })
}

/// Solves on `[τ, t₁]` with [`solve_volterra`] and advances the state to `t₁`.
pub fn extend_state(kernels: &KernelTable, state: &State, u: &ControlSignal, t1: usize) -> Result<State> {
    if t1 < state.tau_index() {
        return Err(invalid("t1", "cannot extend a state backwards in time"));
    }
    let segment = u.restrict(state.tau_index(), t1)?;
    let trajectory = solve_volterra(kernels, state, &segment)?;
    extend_with_trajectory(kernels, state, &trajectory, t1)
}
