//! Canonical quantum observables for matrix-valued Schrödinger operators and
//! their weighted Born-Oppenheimer molecular dynamics approximation.
//!
//! The crate is split along the numerical pipeline:
//!
//! - [`model`]: matrix potentials and adiabatic surfaces,
//! - [`quantum`]: finite-difference Hamiltonian, spectra, densities, correlations,
//! - [`borndyn`]: surface weights, Verlet flows, phase-space quadrature,
//! - [`langevin`]: ergodic averages along Langevin paths,
//! - [`diag`]: the asymptotic diagonalization recursion,
//! - [`weyl`]: Weyl quantization and Moyal composition on a truncated phase space.

pub mod diag;
pub mod error;
pub mod grid;
pub mod langevin;
pub mod model;
pub mod borndyn;
pub mod numerics;
pub mod quantum;
pub mod weyl;

pub use error::{Error, Result};
pub use grid::{PhaseSpaceGrid, SpatialGrid};
pub use model::{MatrixPotential, Surface};
