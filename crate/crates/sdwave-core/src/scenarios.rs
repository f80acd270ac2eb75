// SPDX-License-Identifier: Apache-2.0

//! Seeded random states, initial data and controls for the verification
//! suites.
//!
//! Random modal coefficients of mode `n` are standard normal draws scaled by
//! `n⁻⁴`, so the sampled fields are smooth in space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::forward::{SmoothControl, State};
use crate::kernels::KernelTable;
use crate::spectral::{BoundaryVector, ModalVector, SpectralBasis};

/// Deterministic generator for the given seed and stream label.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn smooth_coeffs(rng: &mut impl Rng, n_modes: usize) -> Vec<f64> {
    (1..=n_modes)
        .map(|n| normal(rng) / (n as f64).powi(4))
        .collect()
}

fn boundary(rng: &mut impl Rng) -> BoundaryVector {
    [normal(rng), normal(rng)]
}

/// Smooth state at node `tau_index`: history `ξ(r) = a + b sin(2r)`,
/// present value `v̂ = ξ(τ)` and forcing seed `ŷ = c`, with `a`, `b`, `c`
/// drawn mode by mode.
pub fn smooth_state(rng: &mut impl Rng, kernels: &KernelTable, tau_index: usize) -> Result<State> {
    let nm = kernels.n_modes();
    let a = smooth_coeffs(rng, nm);
    let b = smooth_coeffs(rng, nm);
    let c = smooth_coeffs(rng, nm);
    state_from_profile(kernels, tau_index, &a, &b, c)
}

/// Like [`smooth_state`] but with a forcing seed whose coefficients do not
/// decay, so `ŷ` lies only in `(Dom A)'`.
pub fn rough_state(rng: &mut impl Rng, kernels: &KernelTable, tau_index: usize) -> Result<State> {
    let nm = kernels.n_modes();
    let a = smooth_coeffs(rng, nm);
    let b = smooth_coeffs(rng, nm);
    let c = (0..nm).map(|_| normal(rng)).collect();
    state_from_profile(kernels, tau_index, &a, &b, c)
}

/// State with history `ξ(r) = a + b sin(2r)`, `v̂ = ξ(τ)` and `ŷ = c`.
pub fn state_from_profile(
    kernels: &KernelTable,
    tau_index: usize,
    a: &[f64],
    b: &[f64],
    c: Vec<f64>,
) -> Result<State> {
    let grid = kernels.grid();
    if tau_index > grid.n_steps() {
        return Err(invalid("tau_index", "beyond the grid end"));
    }
    let xi: Vec<Vec<f64>> = (0..=tau_index)
        .map(|j| {
            let s = (2.0 * grid.node(j)).sin();
            a.iter().zip(b).map(|(x, y)| x + y * s).collect()
        })
        .collect();
    State::new(tau_index, xi[tau_index].clone(), xi, c)
}

/// Trigonometric control `a + b sin(ω(t-t₀)) + c cos(ω(t-t₀))` with normal
/// amplitudes.
pub fn random_trig_control(rng: &mut impl Rng, omega: f64, origin: f64) -> SmoothControl {
    SmoothControl::Trigonometric {
        offset: boundary(rng),
        sine: boundary(rng),
        cosine: boundary(rng),
        omega,
        origin,
    }
}

/// Control `a sin(ω(t-t₀)) + b(1 - cos(ω(t-t₀)))`, which vanishes at `t₀`.
pub fn random_vanishing_control(rng: &mut impl Rng, omega: f64, origin: f64) -> SmoothControl {
    let a = boundary(rng);
    let b = boundary(rng);
    SmoothControl::Trigonometric {
        offset: b,
        sine: a,
        cosine: [-b[0], -b[1]],
        omega,
        origin,
    }
}

/// Initial data `(v₀, v₁)` for the damped wave equation compatible with the
/// control: `v₀ = w₀ + Du(0)` and `v₁ = w₁ + Du'(0)` with smooth random
/// `w₀`, `w₁`.
pub fn wave_initial_data(
    rng: &mut impl Rng,
    basis: &SpectralBasis,
    control: &SmoothControl,
) -> (ModalVector, ModalVector) {
    let nm = basis.n_modes();
    let w0 = smooth_coeffs(rng, nm);
    let w1 = smooth_coeffs(rng, nm);
    let du0 = basis.dirichlet_map(&control.value(0.0));
    let du1 = basis.dirichlet_map(&control.derivative(1, 0.0));
    let v0 = w0.iter().zip(&du0.coeffs).map(|(a, b)| a + b).collect();
    let v1 = w1.iter().zip(&du1.coeffs).map(|(a, b)| a + b).collect();
    (ModalVector::new(v0), ModalVector::new(v1))
}
