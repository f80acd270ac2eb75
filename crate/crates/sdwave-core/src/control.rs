// SPDX-License-Identifier: Apache-2.0

//! Operator assembly and the optimality system of the regulator problem.
//!
//! From a state `S` at node `τ`, every trajectory is affine in the control:
//! `v = h + Λu`, where `h = Γ(v̂, ξ) + Ŷ` is the free response and
//! `(Λu)(t) = -∫_τ^t Z(t-s) ADu(s) ds`. The cost
//! `J(u) = ∫_τ^T ‖v‖² + ‖u‖²` is minimized by `u⁺ = -Λ*(I + ΛΛ*)⁻¹h`, and
//! the minimum is `W = ⟨(I + ΛΛ*)⁻¹h, h⟩`.
//!
//! Controls are constant on each panel. Fields are sampled at the nodes and
//! integrated with the trapezoidal rule, controls are integrated exactly,
//! and `Λ*` is the adjoint of `Λ` for these two inner products. With
//! `Q = diag(trapezoid weights)` this gives `Λ* = ΛᵀQ/dt`.
//!
//! The matrix `A_j = dt I + ΛᵀQΛ` of the problem starting at node `j`
//! depends only on the number of remaining panels, and `A_j` is the
//! trailing principal block of `A_τ` for every `j ≥ τ`. Ordering panels
//! backwards from `T` turns these trailing blocks into leading blocks, so one
//! Cholesky factorization ([`ControlFactor`]) solves the problem from every
//! later node.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_len, invalid, Error, Result};
use crate::forward::{history_seed, memory_raw, solve_voc, ControlSignal, ModalField, State, Trajectory};
use crate::kernels::{trapezoid_weights, z_exponentials, KernelTable};
use crate::spectral::{boundary_dot, dot, BoundaryVector};

/// Node-sampled field on `[t_start, T]`, one row of modal coefficients per
/// node.
pub type Field = Vec<Vec<f64>>;

/// Dense and matrix-free forms of `Γ`, `Λ`, `Λ*` and `h` on `[t_start, T]`.
#[derive(Debug, Clone)]
pub struct OperatorAssembly<'a> {
    kernels: &'a KernelTable,
    start: usize,
    n_panels: usize,
    weights: Vec<f64>,
}

impl<'a> OperatorAssembly<'a> {
    /// Assembly for the segment `[t_start, T]`.
    pub fn new(kernels: &'a KernelTable, start: usize) -> Result<Self> {
        let ns = kernels.grid().n_steps();
        if start > ns {
            return Err(invalid("start", format!("node {start} beyond the grid end {ns}")));
        }
        let n_panels = ns - start;
        Ok(Self {
            kernels,
            start,
            n_panels,
            weights: trapezoid_weights(n_panels, kernels.grid().dt()),
        })
    }

    /// Kernel tables.
    pub fn kernels(&self) -> &'a KernelTable {
        self.kernels
    }

    /// First node.
    pub fn start(&self) -> usize {
        self.start
    }

    /// Number of panels to `T`.
    pub fn n_panels(&self) -> usize {
        self.n_panels
    }

    /// Trapezoidal node weights on the segment.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `L²(t_start, T; H)` inner product of two node fields.
    pub fn inner(&self, a: &Field, b: &Field) -> f64 {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(q, (x, y))| q * dot(x, y))
            .sum()
    }

    /// `L²(t_start, T; U)` inner product of two panel controls.
    pub fn control_inner(&self, a: &[BoundaryVector], b: &[BoundaryVector]) -> f64 {
        self.kernels.grid().dt() * a.iter().zip(b).map(|(x, y)| boundary_dot(x, y)).sum::<f64>()
    }

    /// Block `Λ[(i, n), (p, ·)]` coupling panel `p` to the mode-`n`
    /// coefficient at node `i` (both relative to the start).
    pub fn lambda_block(&self, i: usize, n: usize, p: usize) -> BoundaryVector {
        if i <= p {
            return [0.0; 2];
        }
        let m = self.kernels.mode(n);
        let d = self.kernels.basis().dmap(n);
        let c = -m.lambda * m.wz.panel[i - p - 1];
        [c * d[0], c * d[1]]
    }

    /// Dense `Λ` with rows `(node, mode)` and columns `(panel, channel)`.
    pub fn lambda_matrix(&self) -> DMatrix<f64> {
        let nm = self.kernels.n_modes();
        let l = self.n_panels;
        let mut out = DMatrix::zeros((l + 1) * nm, 2 * l);
        for i in 1..=l {
            for n in 0..nm {
                for p in 0..i {
                    let b = self.lambda_block(i, n, p);
                    out[(i * nm + n, 2 * p)] = b[0];
                    out[(i * nm + n, 2 * p + 1)] = b[1];
                }
            }
        }
        out
    }

    /// `Λu` for a panel control.
    pub fn apply_lambda(&self, u: &[BoundaryVector]) -> Result<Field> {
        check_len("panel control", self.n_panels, u.len())?;
        let basis = self.kernels.basis();
        let nm = self.kernels.n_modes();
        let mut out = vec![vec![0.0; nm]; self.n_panels + 1];
        for n in 0..nm {
            let m = self.kernels.mode(n);
            let d = basis.dmap(n);
            let du: Vec<f64> = u.iter().map(|x| boundary_dot(&d, x)).collect();
            for (i, row) in out.iter_mut().enumerate().skip(1) {
                let s: f64 = (0..i).map(|p| m.wz.panel[i - p - 1] * du[p]).sum();
                row[n] = -m.lambda * s;
            }
        }
        Ok(out)
    }

    /// `ΛᵀQv`, the Euclidean transpose of `Λ` applied to a weighted field.
    pub fn lambda_t_q(&self, v: &Field) -> Result<Vec<BoundaryVector>> {
        check_len("node field", self.n_panels + 1, v.len())?;
        let basis = self.kernels.basis();
        let l = self.n_panels;
        let mut out = vec![[0.0; 2]; l];
        // `n` selects a column of the node field, not an element of it.
        #[allow(clippy::needless_range_loop)]
        for n in 0..self.kernels.n_modes() {
            let m = self.kernels.mode(n);
            let d = basis.dmap(n);
            for (p, o) in out.iter_mut().enumerate() {
                let s: f64 = (p + 1..=l)
                    .map(|i| self.weights[i] * m.wz.panel[i - p - 1] * v[i][n])
                    .sum();
                let c = -m.lambda * s;
                o[0] += c * d[0];
                o[1] += c * d[1];
            }
        }
        Ok(out)
    }

    /// `Λ*v = ΛᵀQv/dt`, the adjoint of `Λ` for the quadrature inner products.
    pub fn apply_lambda_star(&self, v: &Field) -> Result<Vec<BoundaryVector>> {
        let dt = self.kernels.grid().dt();
        Ok(self
            .lambda_t_q(v)?
            .into_iter()
            .map(|g| [g[0] / dt, g[1] / dt])
            .collect())
    }

    /// Field `Z(t - t_start)a + G(t - t_start)b` with
    /// `G(σ) = ∫₀^σ Z(r) e^{-(σ-r)} dr`: the free response to a present value
    /// `a` and a seed `b`.
    pub fn free_response(&self, a: &[f64], b: &[f64]) -> Field {
        (0..=self.n_panels)
            .map(|l| {
                self.kernels
                    .modes()
                    .iter()
                    .enumerate()
                    .map(|(n, m)| m.z[l] * a[n] + m.g[l] * b[n])
                    .collect()
            })
            .collect()
    }

    /// `Γ(v̂, ξ)`: the response to the present value and the history.
    pub fn apply_gamma(&self, v_hat: &[f64], xi: &ModalField) -> Result<Field> {
        check_len("history end", self.start, xi.end())?;
        let mem: Vec<f64> = memory_raw(self.kernels, xi.rows()).iter().map(|x| -x).collect();
        Ok(self.free_response(v_hat, &mem))
    }

    /// `Ŷ`: the response to the forcing seed.
    pub fn apply_y(&self, y_hat: &[f64]) -> Field {
        self.free_response(&vec![0.0; y_hat.len()], y_hat)
    }

    /// `h = Γ(v̂, ξ) + Ŷ`, the uncontrolled trajectory.
    pub fn build_h(&self, state: &State) -> Result<Field> {
        self.check_state(state)?;
        let c = history_seed(self.kernels, state);
        Ok(self.free_response(&state.v_hat().coeffs, &c))
    }

    fn check_state(&self, state: &State) -> Result<()> {
        check_len("state modes", self.kernels.n_modes(), state.n_modes())?;
        if state.tau_index() != self.start {
            return Err(invalid("state", "state node differs from the assembly start"));
        }
        Ok(())
    }

    /// `[Λ*φ](t_start) = -∫ K*(s - t_start) φ(s) ds` for the field
    /// `φ = Z a + G b + Λu` generated by a present value `a`, a seed `b` and
    /// a panel control `u`.
    ///
    /// The integrals are evaluated in closed form from the two-exponential
    /// representation of `Z`. A node-based rule would not do: for the stiff
    /// modes `φ` has a boundary layer of width `1/|λ|` at `t_start`.
    pub fn lambda_star_at_start(&self, a: &[f64], b: &[f64], u: &[BoundaryVector]) -> Result<BoundaryVector> {
        let nm = self.kernels.n_modes();
        check_len("present value", nm, a.len())?;
        check_len("seed", nm, b.len())?;
        check_len("panel control", self.n_panels, u.len())?;
        let dt = self.kernels.grid().dt();
        let horizon = self.n_panels as f64 * dt;
        let basis = self.kernels.basis();
        let mut out = [0.0; 2];
        for n in 0..nm {
            let lam = basis.lambda(n);
            let d = basis.dmap(n);
            let exps = z_exponentials(lam)
                .ok_or_else(|| invalid("basis", format!("mode {} has no real exponential form", n + 1)))?;
            // ∫₀^S e^{rσ} dσ.
            let ex = |r: f64, len: f64| -> f64 {
                if (r * len).abs() < 1e-12 {
                    len
                } else {
                    (r * len).exp_m1() / r
                }
            };
            let mut zz = 0.0;
            let mut zg = 0.0;
            for &(ak, mk) in &exps {
                for &(al, ml) in &exps {
                    zz += ak * al * ex(mk + ml, horizon);
                    zg += ak * al / (ml + 1.0) * (ex(mk + ml, horizon) - ex(mk - 1.0, horizon));
                }
            }
            // F(s) = ∫_s^S Z(σ) Z₁(σ - s) dσ with Z₁ = ∫₀ Z.
            let f = |s0: f64| -> f64 {
                let rest = horizon - s0;
                let mut acc = 0.0;
                for &(ak, mk) in &exps {
                    let shift = (mk * s0).exp();
                    for &(al, ml) in &exps {
                        acc += ak * al / ml * shift * (ex(mk + ml, rest) - ex(mk, rest));
                    }
                }
                acc
            };
            let mut zu = 0.0;
            let mut f_left = f(0.0);
            for (p, up) in u.iter().enumerate() {
                let f_right = f((p + 1) as f64 * dt);
                zu += boundary_dot(&d, up) * (f_left - f_right);
                f_left = f_right;
            }
            let integral = zz * a[n] + zg * b[n] - lam * zu;
            let c = -lam * integral;
            out[0] += c * d[0];
            out[1] += c * d[1];
        }
        Ok(out)
    }

    /// `I + Q^{1/2}ΛΛᵀQ^{1/2}/dt`, the symmetric form of `I + ΛΛ*` acting on
    /// `Q^{1/2}`-scaled node fields.
    pub fn h_space_matrix(&self) -> DMatrix<f64> {
        let nm = self.kernels.n_modes();
        let dt = self.kernels.grid().dt();
        let mut b = self.lambda_matrix();
        for i in 0..=self.n_panels {
            let s = self.weights[i].sqrt();
            for n in 0..nm {
                b.row_mut(i * nm + n).scale_mut(s);
            }
        }
        let mut m = &b * b.transpose();
        m.scale_mut(1.0 / dt);
        for k in 0..m.nrows() {
            m[(k, k)] += 1.0;
        }
        m
    }
}

/// Cholesky factor of `A = dt I + ΛᵀQΛ` for the longest segment, with
/// panels ordered backwards from `T`.
#[derive(Debug, Clone)]
pub struct ControlFactor {
    max_panels: usize,
    chol: DMatrix<f64>,
    spectrum: (f64, f64),
}

impl ControlFactor {
    /// Factors the control-space matrix for segments of up to `max_panels`
    /// panels ending at `T`.
    pub fn new(kernels: &KernelTable, max_panels: usize) -> Result<Self> {
        let ns = kernels.grid().n_steps();
        if max_panels > ns {
            return Err(invalid("max_panels", "longer than the grid"));
        }
        let dt = kernels.grid().dt();
        let assembly = OperatorAssembly::new(kernels, ns - max_panels)?;
        let lam = assembly.lambda_matrix();
        let nm = kernels.n_modes();
        let mut qlam = lam.clone();
        for i in 0..=max_panels {
            let q = assembly.weights[i];
            for n in 0..nm {
                qlam.row_mut(i * nm + n).scale_mut(q);
            }
        }
        let a = lam.transpose() * qlam;
        let size = 2 * max_panels;
        let rev = |k: usize| 2 * (max_panels - 1 - k / 2) + k % 2;
        let mut r = DMatrix::zeros(size, size);
        for i in 0..size {
            for j in 0..size {
                r[(rev(i), rev(j))] = 0.5 * (a[(i, j)] + a[(j, i)]);
            }
            r[(rev(i), rev(i))] += dt;
        }
        let spectrum = if size > 0 {
            let eig = r.clone().symmetric_eigenvalues();
            (eig.min() / dt, eig.max() / dt)
        } else {
            (1.0, 1.0)
        };
        let chol = if size > 0 {
            nalgebra::Cholesky::new(r)
                .ok_or_else(|| Error::Factorization("control-space matrix is not positive definite".into()))?
                .l()
        } else {
            DMatrix::zeros(0, 0)
        };
        Ok(Self {
            max_panels,
            chol,
            spectrum,
        })
    }

    /// Longest supported segment.
    pub fn max_panels(&self) -> usize {
        self.max_panels
    }

    /// Smallest and largest eigenvalue of `I + Λ*Λ` on the longest segment.
    pub fn spectrum(&self) -> (f64, f64) {
        self.spectrum
    }

    /// Solves `A x = b` on the segment of `n_panels` panels ending at `T`;
    /// `b` and `x` are ordered forwards in time.
    pub fn solve(&self, n_panels: usize, b: &[BoundaryVector]) -> Result<Vec<BoundaryVector>> {
        if n_panels > self.max_panels {
            return Err(invalid("n_panels", "segment longer than the factored one"));
        }
        check_len("right-hand side", n_panels, b.len())?;
        let size = 2 * n_panels;
        let rev = |k: usize| 2 * (n_panels - 1 - k / 2) + k % 2;
        let mut y = vec![0.0; size];
        for k in 0..size {
            y[rev(k)] = b[k / 2][k % 2];
        }
        let c = &self.chol;
        for i in 0..size {
            let mut s = y[i];
            for k in 0..i {
                s -= c[(i, k)] * y[k];
            }
            y[i] = s / c[(i, i)];
        }
        for i in (0..size).rev() {
            let mut s = y[i];
            for k in i + 1..size {
                s -= c[(k, i)] * y[k];
            }
            y[i] = s / c[(i, i)];
        }
        let mut x = vec![[0.0; 2]; n_panels];
        for k in 0..size {
            x[k / 2][k % 2] = y[rev(k)];
        }
        Ok(x)
    }
}

/// Kernel tables plus the control-space factorization, valid for every
/// start node from `first_node` to `T`.
#[derive(Debug, Clone)]
pub struct Regulator<'a> {
    kernels: &'a KernelTable,
    factor: ControlFactor,
    first_node: usize,
}

impl<'a> Regulator<'a> {
    /// Prepares the solver for problems starting at or after `first_node`.
    pub fn new(kernels: &'a KernelTable, first_node: usize) -> Result<Self> {
        let ns = kernels.grid().n_steps();
        if first_node > ns {
            return Err(invalid("first_node", "beyond the grid end"));
        }
        Ok(Self {
            kernels,
            factor: ControlFactor::new(kernels, ns - first_node)?,
            first_node,
        })
    }

    /// Kernel tables.
    pub fn kernels(&self) -> &'a KernelTable {
        self.kernels
    }

    /// Control-space factorization.
    pub fn factor(&self) -> &ControlFactor {
        &self.factor
    }

    /// Assembly for problems starting at node `j`.
    pub fn assembly(&self, j: usize) -> Result<OperatorAssembly<'a>> {
        if j < self.first_node {
            return Err(invalid("j", "node precedes the factored range"));
        }
        OperatorAssembly::new(self.kernels, j)
    }

    /// Solves `(I + Λ*Λ)ψ = Λ*g` on the segment of `assembly`.
    fn psi(&self, assembly: &OperatorAssembly, g: &Field) -> Result<Vec<BoundaryVector>> {
        let rhs = assembly.lambda_t_q(g)?;
        self.factor.solve(assembly.n_panels(), &rhs)
    }

    /// `H g = (I + ΛΛ*)⁻¹ g` through the decoupled system
    /// `φ = g - Λψ`, `ψ = Λ*φ`.
    pub fn apply_h(&self, assembly: &OperatorAssembly, g: &Field) -> Result<Field> {
        let psi = self.psi(assembly, g)?;
        let lpsi = assembly.apply_lambda(&psi)?;
        Ok(g.iter()
            .zip(&lpsi)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect())
    }

    /// Optimal panel control `u⁺ = -(I + Λ*Λ)⁻¹Λ*h` from `state`.
    pub fn optimal_control(&self, state: &State) -> Result<ControlSignal> {
        let assembly = self.assembly(state.tau_index())?;
        let h = assembly.build_h(state)?;
        let psi = self.psi(&assembly, &h)?;
        Ok(ControlSignal::Panel {
            start: state.tau_index(),
            values: psi.into_iter().map(|x| [-x[0], -x[1]]).collect(),
        })
    }

    /// Value `W = ⟨Hh, h⟩` of the state.
    pub fn value(&self, state: &State) -> Result<f64> {
        let assembly = self.assembly(state.tau_index())?;
        let h = assembly.build_h(state)?;
        let g = assembly.lambda_t_q(&h)?;
        let x = self.factor.solve(assembly.n_panels(), &g)?;
        let gx: f64 = g.iter().zip(&x).map(|(a, b)| boundary_dot(a, b)).sum();
        Ok(assembly.inner(&h, &h) - gx)
    }

    /// First-panel value of the optimal control from `state`; zero at `T`.
    pub fn feedback_gain(&self, state: &State) -> Result<BoundaryVector> {
        if state.tau_index() == self.kernels.grid().n_steps() {
            self.assembly(state.tau_index())?.check_state(state)?;
            return Ok([0.0; 2]);
        }
        let u = self.optimal_control(state)?;
        Ok(u.values()[0])
    }

    /// `⟨P S₁, S₂⟩ = ⟨H h₁, h₂⟩` for two states at the same node.
    pub fn p_form(&self, s1: &State, s2: &State) -> Result<f64> {
        if s1.tau_index() != s2.tau_index() {
            return Err(invalid("s2", "states live at different nodes"));
        }
        let assembly = self.assembly(s1.tau_index())?;
        let h1 = assembly.build_h(s1)?;
        let h2 = assembly.build_h(s2)?;
        let hh1 = self.apply_h(&assembly, &h1)?;
        Ok(assembly.inner(&hh1, &h2))
    }
}

/// Optimal control, trajectory and value from one state.
#[derive(Debug, Clone)]
pub struct OptimalSolution {
    /// Optimal panel control `u⁺`.
    pub u_plus: ControlSignal,
    /// Optimal trajectory `v⁺ = (I + ΛΛ*)⁻¹h`.
    pub v_plus: Trajectory,
    /// Optimal cost `J(u⁺)`.
    pub value: f64,
    /// `L²` norm of the cost gradient at `u⁺`.
    pub residual: f64,
}

/// Solves `(I + ΛΛ*)v⁺ = h` by a dense Cholesky factorization on node
/// fields and sets `u⁺ = -Λ*v⁺`.
pub fn solve_optimal(kernels: &KernelTable, state: &State) -> Result<OptimalSolution> {
    let assembly = OperatorAssembly::new(kernels, state.tau_index())?;
    let h = assembly.build_h(state)?;
    let nm = kernels.n_modes();
    let l = assembly.n_panels();
    let mut rhs = DVector::zeros((l + 1) * nm);
    for i in 0..=l {
        let s = assembly.weights()[i].sqrt();
        for n in 0..nm {
            rhs[i * nm + n] = s * h[i][n];
        }
    }
    let v: Field = if l == 0 {
        h.clone()
    } else {
        let chol = nalgebra::Cholesky::new(assembly.h_space_matrix())
            .ok_or_else(|| Error::Factorization("I + ΛΛ* is not positive definite".into()))?;
        let x = chol.solve(&rhs);
        (0..=l)
            .map(|i| {
                let s = assembly.weights()[i].sqrt();
                (0..nm).map(|n| x[i * nm + n] / s).collect()
            })
            .collect()
    };
    let u: Vec<BoundaryVector> = assembly
        .apply_lambda_star(&v)?
        .into_iter()
        .map(|x| [-x[0], -x[1]])
        .collect();
    let u_plus = ControlSignal::Panel {
        start: state.tau_index(),
        values: u,
    };
    let value = evaluate_cost(kernels, state, &u_plus)?;
    let grad = cost_gradient(kernels, state, &u_plus)?;
    let residual = assembly.control_inner(&grad, &grad).sqrt();
    Ok(OptimalSolution {
        u_plus,
        v_plus: ModalField::new(state.tau_index(), v)?,
        value,
        residual,
    })
}

/// Solves the optimality system in control space,
/// `u⁺ = -(I + Λ*Λ)⁻¹Λ*h`, with a dense factorization.
pub fn solve_optimal_control_space(kernels: &KernelTable, state: &State) -> Result<ControlSignal> {
    Regulator::new(kernels, state.tau_index())?.optimal_control(state)
}

/// `J(u) = ∫ ‖v‖² + ‖u‖²` with `v` from [`solve_voc`] on `[τ, T]`.
pub fn evaluate_cost(kernels: &KernelTable, state: &State, u: &ControlSignal) -> Result<f64> {
    if u.end() != kernels.grid().n_steps() {
        return Err(invalid("u", "the cost needs a control up to the horizon"));
    }
    let v = solve_voc(kernels, state, u)?;
    let dt = kernels.grid().dt();
    Ok(v.norm_sq(dt) + u.norm_sq(dt))
}

/// Riesz representative of the cost gradient, `2(u + Λ*(h + Λu))`, for a
/// panel control on `[τ, T]`.
pub fn cost_gradient(kernels: &KernelTable, state: &State, u: &ControlSignal) -> Result<Vec<BoundaryVector>> {
    let values = match u {
        ControlSignal::Panel { start, values } if *start == state.tau_index() => values,
        _ => return Err(invalid("u", "the gradient is defined for panel controls from τ")),
    };
    let assembly = OperatorAssembly::new(kernels, state.tau_index())?;
    let h = assembly.build_h(state)?;
    let lu = assembly.apply_lambda(values)?;
    let v: Field = h
        .iter()
        .zip(&lu)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    let ls = assembly.apply_lambda_star(&v)?;
    Ok(values
        .iter()
        .zip(&ls)
        .map(|(a, b)| [2.0 * (a[0] + b[0]), 2.0 * (a[1] + b[1])])
        .collect())
}

/// `W(S) = ⟨(I + ΛΛ*)⁻¹h, h⟩` computed through [`Regulator::apply_h`].
pub fn value_function(kernels: &KernelTable, state: &State) -> Result<f64> {
    let reg = Regulator::new(kernels, state.tau_index())?;
    let assembly = reg.assembly(state.tau_index())?;
    let h = assembly.build_h(state)?;
    let hh = reg.apply_h(&assembly, &h)?;
    Ok(assembly.inner(&hh, &h))
}

/// Values `W_j(S_j)` for many states, computed in parallel.
pub fn values_parallel(reg: &Regulator, states: &[State]) -> Result<Vec<f64>> {
    states.par_iter().map(|s| reg.value(s)).collect()
}
