// SPDX-License-Identifier: Apache-2.0

//! Modal representation of the Dirichlet Laplacian on the unit interval.
//!
//! The eigenpairs of `A = d²/dx²` with homogeneous Dirichlet conditions on
//! `(0, 1)` are `λ_n = -(nπ)²` and `φ_n(x) = √2 sin(nπx)`. Every operator in
//! this crate is diagonal in this basis, so fields are stored as coefficient
//! vectors of length `n_modes`.
//!
//! The Dirichlet map `D` sends boundary data `(u₀, u₁)` to the harmonic
//! extension `u₀(1 - x) + u₁x`, whose modal coefficients are
//! `d_n⁰ u₀ + d_n¹ u₁` with `d_n⁰ = √2/(nπ)` and `d_n¹ = √2(-1)^{n+1}/(nπ)`.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{invalid, Result};

/// Dirichlet data `(u₀, u₁)` at `x = 0` and `x = 1`.
pub type BoundaryVector = [f64; 2];

/// Euclidean inner product of two boundary vectors.
pub fn boundary_dot(a: &BoundaryVector, b: &BoundaryVector) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Eigenvalues and Dirichlet-map coefficients of a truncated basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    dmap: Vec<BoundaryVector>,
}

/// Coefficient vector together with the exponent `α` of the space
/// `Dom(-A)^α` it models (negative values denote dual spaces).
///
/// The tag is metadata only: after truncation every vector is finite, and
/// the tag records which continuous space the object stands for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalVector {
    /// Modal coefficients.
    pub coeffs: Vec<f64>,
    /// Regularity exponent of the modelled space.
    pub space_tag: f64,
}

impl ModalVector {
    /// Wraps coefficients of an `H`-valued object (`α = 0`).
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self {
            coeffs,
            space_tag: 0.0,
        }
    }

    /// Wraps coefficients with an explicit space tag.
    pub fn with_tag(coeffs: Vec<f64>, space_tag: f64) -> Self {
        Self { coeffs, space_tag }
    }

    /// Zero vector of the given length in `H`.
    pub fn zeros(n_modes: usize) -> Self {
        Self::new(vec![0.0; n_modes])
    }

    /// Number of modes.
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    /// True when the vector has no modes.
    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `H` inner product (Parseval).
    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.coeffs, &other.coeffs)
    }

    /// `H` norm.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Euclidean dot product of two coefficient slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SpectralBasis {
    /// Builds the first `n_modes` eigenpairs and Dirichlet-map coefficients.
    pub fn new(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(invalid("n_modes", "at least one mode is required"));
        }
        let eigenvalues = (1..=n_modes)
            .map(|n| {
                let k = n as f64 * PI;
                -k * k
            })
            .collect();
        let dmap = (1..=n_modes)
            .map(|n| {
                let base = SQRT_2 / (n as f64 * PI);
                let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
                [base, sign * base]
            })
            .collect();
        Ok(Self { eigenvalues, dmap })
    }

    /// Number of retained modes.
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues `λ_n = -(nπ)²`, ordered by mode.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvalue of the zero-based mode `n`.
    pub fn lambda(&self, n: usize) -> f64 {
        self.eigenvalues[n]
    }

    /// Dirichlet-map coefficients `(d_n⁰, d_n¹)` of the zero-based mode `n`.
    pub fn dmap(&self, n: usize) -> BoundaryVector {
        self.dmap[n]
    }

    /// All Dirichlet-map coefficient pairs.
    pub fn dmap_coeffs(&self) -> &[BoundaryVector] {
        &self.dmap
    }

    /// Modal coefficients of the harmonic extension `Du`.
    pub fn dirichlet_map(&self, u: &BoundaryVector) -> ModalVector {
        // Du lies in Dom(-A)^{1/4-ε}; the tag is kept at 0 because the
        // exponent is not a fixed number.
        ModalVector::new(self.dmap.iter().map(|d| boundary_dot(d, u)).collect())
    }

    /// Modal coefficients of `ADu`, an element of `(Dom A)'`.
    pub fn apply_ad(&self, u: &BoundaryVector) -> ModalVector {
        let coeffs = self
            .dmap
            .iter()
            .zip(&self.eigenvalues)
            .map(|(d, lam)| lam * boundary_dot(d, u))
            .collect();
        ModalVector::with_tag(coeffs, -1.0)
    }

    /// Adds `scale * ADu` into a coefficient slice.
    pub fn add_ad(&self, u: &BoundaryVector, scale: f64, out: &mut [f64]) {
        for ((o, d), lam) in out.iter_mut().zip(&self.dmap).zip(&self.eigenvalues) {
            *o += scale * lam * boundary_dot(d, u);
        }
    }

    /// Transpose of [`SpectralBasis::apply_ad`]: component `k` equals
    /// `Σ_n λ_n d_n^k p_n`.
    pub fn adjoint_ad(&self, p: &[f64]) -> BoundaryVector {
        let mut out = [0.0; 2];
        for ((d, lam), pn) in self.dmap.iter().zip(&self.eigenvalues).zip(p) {
            out[0] += lam * d[0] * pn;
            out[1] += lam * d[1] * pn;
        }
        out
    }

    /// Multiplies coefficient `n` by `(-λ_n)^α` and lowers the tag by `α`.
    pub fn apply_fractional(&self, alpha: f64, v: &ModalVector) -> ModalVector {
        let coeffs = v
            .coeffs
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, lam)| c * (-lam).powf(alpha))
            .collect();
        ModalVector::with_tag(coeffs, v.space_tag - alpha)
    }

    /// Squared norm of `(Dom A)'` realised as `‖A⁻¹y‖²_H = Σ λ_n⁻² y_n²`.
    pub fn dual_norm_sq(&self, y: &[f64]) -> f64 {
        y.iter()
            .zip(&self.eigenvalues)
            .map(|(c, lam)| c * c / (lam * lam))
            .sum()
    }

    /// Applies `A + I` to a coefficient slice.
    pub fn apply_a_plus_i(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.eigenvalues)
            .map(|(c, lam)| (lam + 1.0) * c)
            .collect()
    }

    /// Evaluates the field with coefficients `v` at `x ∈ [0, 1]`.
    pub fn evaluate(&self, v: &[f64], x: f64) -> f64 {
        v.iter()
            .enumerate()
            .map(|(n, c)| c * SQRT_2 * ((n + 1) as f64 * PI * x).sin())
            .sum()
    }
}
