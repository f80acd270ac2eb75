// SPDX-License-Identifier: Apache-2.0

//! Benchmark fixtures shared by the criterion targets.

use sdwave_core::scenarios::{random_trig_control, seeded_rng, smooth_state};
use sdwave_core::{ControlSignal, KernelTable, SpectralBasis, State, TimeGrid};

/// Horizon used by every fixture.
pub const T_FINAL: f64 = 0.5;

/// Kernel tables for `n_modes` modes on a grid of `n_steps` panels.
pub fn kernels(n_modes: usize, n_steps: usize) -> KernelTable {
    let basis = SpectralBasis::new(n_modes).expect("positive mode count");
    let grid = TimeGrid::new(T_FINAL, n_steps).expect("valid grid");
    KernelTable::new(&basis, &grid).expect("kernel tables")
}

/// Seeded smooth state at node `tau` together with a trigonometric nodal
/// control on `[τ, T]`.
pub fn problem(kernels: &KernelTable, tau: usize) -> (State, ControlSignal) {
    let mut rng = seeded_rng(1, 0);
    let state = smooth_state(&mut rng, kernels, tau).expect("state");
    let grid = kernels.grid();
    let u = random_trig_control(&mut rng, 3.0, grid.node(tau)).nodal(grid, tau, grid.n_steps());
    (state, u)
}
