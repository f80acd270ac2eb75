// SPDX-License-Identifier: Apache-2.0

//! Time grid and per-mode kernel tables.
//!
//! For each mode the table stores samples of
//!
//! * `E(t) = e^{λt}`,
//! * `N(t) = e^{λt} - (e^{λt} - e^{-t})/(λ + 1)`,
//! * the resolvent `Z`, which solves `Z(t) = E(t) + ∫₀ᵗ N(t-s) Z(s) ds`,
//! * `Z'(t) = (λ + 1) Z(t) - ∫₀ᵗ e^{-(t-s)} Z(s) ds`,
//!
//! together with the first two antiderivatives of `E` and `Z`. The
//! antiderivatives feed product-integration weights: integrals
//! `∫ k(σ) f(σ) dσ` are evaluated exactly for piecewise-linear `f`, which
//! keeps the quadrature second order uniformly in the stiffness `λ dt`.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::spectral::{boundary_dot, BoundaryVector, ModalVector, SpectralBasis};

/// Uniform grid `t_j = j dt` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Builds a grid with `n_steps` panels on `[0, t_final]`.
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(invalid("t_final", format!("must be positive, got {t_final}")));
        }
        if n_steps == 0 {
            return Err(invalid("n_steps", "at least one step is required"));
        }
        Ok(Self { t_final, n_steps })
    }

    /// Horizon `T`.
    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Number of panels.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Step size `T / n_steps`.
    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    /// Node `t_j`.
    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    /// All nodes `t_0, …, t_{n_steps}`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|j| self.node(j)).collect()
    }

    /// Composite trapezoidal weights on the whole grid.
    pub fn quad_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.n_steps, self.dt())
    }

    /// Index of the node equal to `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt();
        let j = x.round();
        if j >= 0.0 && j <= self.n_steps as f64 && (x - j).abs() <= 1e-9 * (1.0 + x.abs()) {
            Some(j as usize)
        } else {
            None
        }
    }
}

/// Trapezoidal weights for `n_panels` panels of width `dt`.
///
/// With zero panels the single weight is zero, so integrals over an empty
/// range vanish.
pub fn trapezoid_weights(n_panels: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; n_panels + 1];
    if n_panels == 0 {
        w[0] = 0.0;
    } else {
        w[0] = dt / 2.0;
        w[n_panels] = dt / 2.0;
    }
    w
}

/// Product-integration weights for a kernel `k` sampled through its
/// antiderivatives `k₁ = ∫₀^σ k` and `k₂ = ∫₀^σ k₁` on a uniform grid.
///
/// On panel `[σ_m, σ_{m+1}]` the rule
/// `∫ k f ≈ a_m f(σ_m) + b_m f(σ_{m+1})` is exact for linear `f`, and
/// `panel[m] = ∫_{σ_m}^{σ_{m+1}} k` integrates piecewise-constant `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductWeights {
    /// Left-endpoint weights.
    pub a: Vec<f64>,
    /// Right-endpoint weights.
    pub b: Vec<f64>,
    /// Panel integrals.
    pub panel: Vec<f64>,
}

impl ProductWeights {
    /// Builds the weights from antiderivative samples at `σ_m = m dt`.
    pub fn from_antiderivatives(k1: &[f64], k2: &[f64], dt: f64) -> Self {
        let n = k1.len().saturating_sub(1);
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut panel = Vec::with_capacity(n);
        for m in 0..n {
            let bm = k1[m + 1] - (k2[m + 1] - k2[m]) / dt;
            let cm = k1[m + 1] - k1[m];
            a.push(cm - bm);
            b.push(bm);
            panel.push(cm);
        }
        Self { a, b, panel }
    }

    /// Approximates `∫₀^{l dt} k(σ) f(σ) dσ` for piecewise-linear `f`, where
    /// `f(m)` returns the sample at `σ_m`.
    pub fn integrate(&self, l: usize, f: impl Fn(usize) -> f64) -> f64 {
        let mut acc = 0.0;
        let mut prev = if l > 0 { f(0) } else { 0.0 };
        for m in 0..l {
            let next = f(m + 1);
            acc += self.a[m] * prev + self.b[m] * next;
            prev = next;
        }
        acc
    }

    /// Node weights `w_0, …, w_l` of [`ProductWeights::integrate`].
    pub fn node_weights(&self, l: usize) -> Vec<f64> {
        let mut w = vec![0.0; l + 1];
        for m in 0..l {
            w[m] += self.a[m];
            w[m + 1] += self.b[m];
        }
        w
    }
}

/// Documentation record of the regularity exponents used in the continuous
/// theory. None of these values enters a computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityConstants {
    /// Small positive slack `ε`.
    pub epsilon: f64,
}

impl RegularityConstants {
    /// Builds the record for a given `ε ∈ (0, 1/4)`.
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.25) {
            return Err(invalid("epsilon", "must lie in (0, 1/4)"));
        }
        Ok(Self { epsilon })
    }

    /// Singularity exponent `σ = 3/4 + ε` of `e^{At}AD`.
    pub fn sigma(&self) -> f64 {
        0.75 + self.epsilon
    }

    /// Integrability exponent `p₀ = 1 + ε`.
    pub fn p0(&self) -> f64 {
        1.0 + self.epsilon
    }

    /// Conjugate exponent `r = 2p₀/(2 - p₀)`.
    pub fn r(&self) -> f64 {
        let p0 = self.p0();
        2.0 * p0 / (2.0 - p0)
    }
}

/// `e^{λt}`.
pub fn eval_e(lambda: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok((lambda * t).exp())
}

/// `N(t) = e^{λt} - (e^{λt} - e^{-t})/(λ + 1)`.
pub fn eval_n(lambda: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    if lambda == -1.0 {
        return Err(invalid("lambda", "the closed form needs λ ≠ -1"));
    }
    Ok(n_closed(lambda, t))
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid("t", format!("must be finite and nonnegative, got {t}")))
    }
}

fn n_closed(lambda: f64, t: f64) -> f64 {
    let e = (lambda * t).exp();
    e - psi(lambda, t)
}

/// `∫₀^σ e^{λ(σ-s)} e^{-s} ds = (e^{λσ} - e^{-σ})/(λ + 1)`.
fn psi(lambda: f64, sigma: f64) -> f64 {
    ((lambda * sigma).exp() - (-sigma).exp()) / (lambda + 1.0)
}

/// Exponential of a 2×2 real matrix, written to avoid overflow when the
/// eigenvalues are large and of opposite magnitude.
pub fn expm2(m: [[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
    let s = 0.5 * (m[0][0] + m[1][1]);
    let half_gap = 0.5 * (m[0][0] - m[1][1]);
    let disc = half_gap * half_gap + m[0][1] * m[1][0];
    // `ch = e^{st} cosh(qt)` and `sh = e^{st} sinh(qt)/q`, with the
    // trigonometric continuation for a negative discriminant.
    let (ch, sh) = if disc >= 0.0 {
        let q = disc.sqrt();
        let qt = q * t;
        if qt > 1e-3 {
            let ep = ((s + q) * t).exp();
            let em = ((s - q) * t).exp();
            (0.5 * (ep + em), 0.5 * (ep - em) / q)
        } else {
            let es = (s * t).exp();
            let qt2 = qt * qt;
            (
                es * (1.0 + qt2 / 2.0 + qt2 * qt2 / 24.0),
                es * t * (1.0 + qt2 / 6.0 + qt2 * qt2 / 120.0),
            )
        }
    } else {
        let w = (-disc).sqrt();
        let wt = w * t;
        let es = (s * t).exp();
        let sinc = if wt > 1e-3 {
            wt.sin() / w
        } else {
            t * (1.0 - wt * wt / 6.0)
        };
        (es * wt.cos(), es * sinc)
    };
    [
        [ch + sh * (m[0][0] - s), sh * m[0][1]],
        [sh * m[1][0], ch + sh * (m[1][1] - s)],
    ]
}

/// Closed-form resolvent: `Z(t)` is the `(0, 0)` entry of the exponential
/// of `[[λ+1, -1], [1, -1]]`.
///
/// Differentiating `Z' = (λ+1)Z - ∫₀ᵗ e^{-(t-s)}Z(s) ds` with the auxiliary
/// variable `w = ∫₀ᵗ e^{-(t-s)}Z(s) ds` gives the linear system
/// `(z, w)' = [[λ+1, -1], [1, -1]](z, w)` with `(z, w)(0) = (1, 0)`.
pub fn z_oracle(lambda: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(expm2([[lambda + 1.0, -1.0], [1.0, -1.0]], t)[0][0])
}

/// Two-exponential form `Z(σ) = α₁e^{μ₁σ} + α₂e^{μ₂σ}` of the resolvent,
/// returned as `[(α₁, μ₁), (α₂, μ₂)]`.
///
/// The exponents are the roots of `μ² - λμ - λ`; they are real and distinct
/// whenever `λ < -4`, which holds for every Dirichlet mode of the unit
/// interval. Other eigenvalues yield `None`.
pub fn z_exponentials(lambda: f64) -> Option<[(f64, f64); 2]> {
    let s = 0.5 * lambda;
    let disc = s * s + lambda;
    if disc <= 0.0 {
        return None;
    }
    let q = disc.sqrt();
    let c = (0.5 * lambda + 1.0) / q;
    Some([(0.5 * (1.0 + c), s + q), (0.5 * (1.0 - c), s - q)])
}

/// Solves the scalar Volterra equation of the second kind
/// `x(t) = f(t) + ∫₀ᵗ k(t-s) x(s) ds` by the trapezoidal rule with the
/// diagonal term treated implicitly.
///
/// `kernel` and `forcing` are sampled on a uniform grid of step `dt`; the
/// result has the length of `forcing`. `mode` only labels errors.
pub fn solve_volterra_scalar(
    kernel: &[f64],
    forcing: &[f64],
    dt: f64,
    mode: usize,
) -> Result<Vec<f64>> {
    let n = forcing.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if kernel.len() < n {
        return Err(Error::DimensionMismatch {
            context: "volterra kernel",
            expected: n,
            found: kernel.len(),
        });
    }
    let diag = 1.0 - 0.5 * dt * kernel[0];
    if diag.abs() < 1e-12 {
        return Err(Error::DegenerateStep {
            mode,
            coefficient: diag,
        });
    }
    let mut x = vec![0.0; n];
    x[0] = forcing[0];
    for i in 1..n {
        let mut s = 0.5 * kernel[i] * x[0];
        for k in 1..i {
            s += kernel[i - k] * x[k];
        }
        x[i] = (forcing[i] + dt * s) / diag;
    }
    Ok(x)
}

/// Samples of one mode's kernels on the grid.
#[derive(Debug, Clone)]
pub struct ModeKernels {
    /// Eigenvalue `λ_n`.
    pub lambda: f64,
    /// `E(t_j)`.
    pub e: Vec<f64>,
    /// `N(t_j)`.
    pub n: Vec<f64>,
    /// `Z(t_j)`.
    pub z: Vec<f64>,
    /// `Z'(t_j)`.
    pub zp: Vec<f64>,
    /// `∫₀^{t_j} Z`.
    pub z1: Vec<f64>,
    /// `∫₀^{t_j} ∫₀^s Z`.
    pub z2: Vec<f64>,
    /// Product weights for the kernel `Z`.
    pub wz: ProductWeights,
    /// Product weights for the kernel `E`.
    pub we: ProductWeights,
    /// `∫₀^{t_l} Z(σ) e^{-(t_l-σ)} dσ` for each lag `l`.
    pub g: Vec<f64>,
    /// `∫₀^{t_l} E(σ) e^{-(t_l-σ)} dσ` for each lag `l` (closed form).
    pub psi: Vec<f64>,
}

/// Per-mode kernel samples on a grid, shared by every solver.
#[derive(Debug, Clone)]
pub struct KernelTable {
    basis: SpectralBasis,
    grid: TimeGrid,
    modes: Vec<ModeKernels>,
    memory: ProductWeights,
    decay: Vec<f64>,
}

impl KernelTable {
    /// Tabulates all kernels; modes are processed in parallel.
    pub fn new(basis: &SpectralBasis, grid: &TimeGrid) -> Result<Self> {
        let dt = grid.dt();
        let t = grid.nodes();
        let decay: Vec<f64> = t.iter().map(|s| (-s).exp()).collect();
        let memory = {
            let k1: Vec<f64> = t.iter().map(|s| -(-s).exp_m1()).collect();
            let k2: Vec<f64> = t.iter().zip(&k1).map(|(s, k)| s - k).collect();
            ProductWeights::from_antiderivatives(&k1, &k2, dt)
        };
        let modes = basis
            .eigenvalues()
            .par_iter()
            .enumerate()
            .map(|(idx, &lambda)| build_mode(lambda, &t, dt, &decay, &memory, idx + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            basis: basis.clone(),
            grid: *grid,
            modes,
            memory,
            decay,
        })
    }

    /// Spectral basis the table was built for.
    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    /// Time grid the table was built for.
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Number of modes.
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Kernels of the zero-based mode `n`.
    pub fn mode(&self, n: usize) -> &ModeKernels {
        &self.modes[n]
    }

    /// All modes.
    pub fn modes(&self) -> &[ModeKernels] {
        &self.modes
    }

    /// Product weights for the memory kernel `e^{-σ}`.
    pub fn memory_weights(&self) -> &ProductWeights {
        &self.memory
    }

    /// `e^{-t_j}`.
    pub fn decay(&self, j: usize) -> f64 {
        self.decay[j]
    }

    /// `K(t_j)u = Z(t_j) ADu`.
    pub fn eval_k(&self, j: usize, u: &BoundaryVector) -> ModalVector {
        let coeffs = self
            .modes
            .iter()
            .enumerate()
            .map(|(n, m)| m.z[j] * m.lambda * boundary_dot(&self.basis.dmap(n), u))
            .collect();
        ModalVector::with_tag(coeffs, -1.0)
    }

    /// `K*(t_j)p = (AD)*(Z(t_j)p)`.
    pub fn eval_k_adjoint(&self, j: usize, p: &[f64]) -> BoundaryVector {
        let zp: Vec<f64> = self.modes.iter().zip(p).map(|(m, c)| m.z[j] * c).collect();
        self.basis.adjoint_ad(&zp)
    }

    /// Largest deviation between the tabulated `Z` and [`z_oracle`].
    pub fn oracle_error(&self) -> f64 {
        let t = self.grid.nodes();
        self.modes
            .iter()
            .flat_map(|m| {
                m.z.iter()
                    .zip(&t)
                    .map(move |(z, &s)| (z - expm2([[m.lambda + 1.0, -1.0], [1.0, -1.0]], s)[0][0]).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Compares partial sums `Σ_{k ≤ k_max} N^{*k} * E` of the Neumann
    /// series with the tabulated `Z` and returns the largest deviation.
    ///
    /// Convolutions use the trapezoidal rule, the same rule as the Volterra
    /// solve, so the partial sums converge to the tabulated `Z` itself.
    pub fn series_check(&self, k_max: usize) -> f64 {
        let dt = self.grid.dt();
        self.modes
            .par_iter()
            .map(|m| {
                let mut term = m.e.clone();
                let mut sum = m.e.clone();
                for _ in 0..k_max {
                    term = trapezoid_convolution(&m.n, &term, dt);
                    for (s, x) in sum.iter_mut().zip(&term) {
                        *s += x;
                    }
                }
                sum.iter()
                    .zip(&m.z)
                    .map(|(s, z)| (s - z).abs())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// `(k * f)(t_i) = ∫₀^{t_i} k(t_i - s) f(s) ds` by the trapezoidal rule.
pub fn trapezoid_convolution(k: &[f64], f: &[f64], dt: f64) -> Vec<f64> {
    (0..f.len())
        .map(|i| {
            if i == 0 {
                return 0.0;
            }
            let mut s = 0.5 * (k[i] * f[0] + k[0] * f[i]);
            for j in 1..i {
                s += k[i - j] * f[j];
            }
            dt * s
        })
        .collect()
}

fn build_mode(
    lambda: f64,
    t: &[f64],
    dt: f64,
    decay: &[f64],
    memory: &ProductWeights,
    mode: usize,
) -> Result<ModeKernels> {
    let e: Vec<f64> = t.iter().map(|s| (lambda * s).exp()).collect();
    let n: Vec<f64> = t.iter().map(|&s| n_closed(lambda, s)).collect();
    let e1: Vec<f64> = t.iter().map(|s| (lambda * s).exp_m1() / lambda).collect();
    let e2: Vec<f64> = e1.iter().zip(t).map(|(a, s)| (a - s) / lambda).collect();
    let z = solve_volterra_scalar(&n, &e, dt, mode)?;
    let z1 = solve_volterra_scalar(&n, &e1, dt, mode)?;
    let z2 = solve_volterra_scalar(&n, &e2, dt, mode)?;
    let wz = ProductWeights::from_antiderivatives(&z1, &z2, dt);
    let we = ProductWeights::from_antiderivatives(&e1, &e2, dt);
    let zp = (0..t.len())
        .map(|j| (lambda + 1.0) * z[j] - memory.integrate(j, |m| z[j - m]))
        .collect();
    let g = (0..t.len())
        .map(|l| wz.integrate(l, |m| decay[l - m]))
        .collect();
    let psi = t.iter().map(|&s| psi(lambda, s)).collect();
    Ok(ModeKernels {
        lambda,
        e,
        n,
        z,
        zp,
        z1,
        z2,
        wz,
        we,
        g,
        psi,
    })
}
