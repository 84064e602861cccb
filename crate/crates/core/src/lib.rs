//! Classical pipeline for mapping the discretized (1+1)D electrostatic
//! Vlasov-Krook equation onto a Carleman-linearized quadratic ODE solver.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: phase-space geometry, vectorization maps and discrete calculus.
//! * [`physics`]: plasma parameters, Krook collision model, initial states and
//!   the plasma feasibility bounds.
//! * [`sparse`]: a small CSR matrix used by every assembly step.
//! * [`qode`]: the quadratic ODE `du/dt = F2 (u⊗u) + F1 u + F0` for Gauss and
//!   Ampère couplings, plus the direct finite-difference right-hand side.
//! * [`analysis`]: norms, log-norm, convergence parameter, rescaling,
//!   truncation levels and complexity accounting.
//! * [`carleman`]: block-tridiagonal Carleman embedding `dz/dt = Az + b`.
//! * [`integrator`]: truncated-Taylor stepping and the linear-system encoding
//!   `L y = ψ` solved classically.
//! * [`reference`]: explicit nonlinear ground-truth integrator.

pub mod analysis;
pub mod carleman;
pub mod error;
pub mod grid;
pub mod integrator;
pub mod physics;
pub mod qode;
pub mod reference;
pub mod sparse;

pub use error::{Error, Result};
pub use grid::{DistributionMatrix, GridSpec};
pub use physics::{BeamSpec, CollisionProfile, MaxwellianNormalization, PhysicalConstants, PlasmaParams};
pub use qode::{Coupling, QuadraticOde};
pub use sparse::SparseMatrix;

/// Euclidean norm of a dense vector.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a - b‖₂`; panics if lengths differ.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dist2: length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
