// SPDX-License-Identifier: Apache-2.0

//! Linear-quadratic boundary control of the strongly damped wave equation
//! `v'' = Δv + Δv'` on `(0, 1)` with Dirichlet control `v = u` on the
//! boundary.
//!
//! The equation is rewritten as a heat equation with persistent memory,
//! `v' = (A + I)v - ∫ e^{-(t-s)} v(s) ds - ADu + y`, whose solution operator
//! is a resolvent family `Z(t)`. Everything is discretized mode by mode in
//! the Dirichlet eigenbasis and on a uniform time grid.
//!
//! * [`spectral`]: eigenpairs, Dirichlet map and the control operator `AD`.
//! * [`kernels`]: the kernels `E`, `N`, `Z`, `Z'` and product-integration weights.
//! * [`forward`]: states, controls and the forward solvers.
//! * [`control`]: the operator assembly and the optimality system.
//! * [`riccati`]: the Riccati form, the feedback law and the verification scans.
//! * [`scenarios`]: seeded random states and controls.
//! * [`suites`]: the verification suites with their checks and tables.

pub mod control;
pub mod error;
pub mod forward;
pub mod kernels;
pub mod riccati;
pub mod scenarios;
pub mod spectral;
pub mod suites;

pub use control::{ControlFactor, OperatorAssembly, OptimalSolution, Regulator};
pub use error::{Error, Result};
pub use forward::{ControlSignal, ModalField, SmoothControl, State, Trajectory};
pub use kernels::{KernelTable, TimeGrid};
pub use spectral::{BoundaryVector, ModalVector, SpectralBasis};
pub use suites::{Bound, Check, ControlRecipe, StateRecipe, Suite, SuiteConfig, SuiteReport, Table, Tolerances};
