//! Sparse plus low-rank matrix decomposition with rank-sparsity incoherence
//! diagnostics.
//!
//! * [`solver`] splits `C` into `A + B` by minimising `γ‖A‖₁ + ‖B‖∗`.
//! * [`tangent`] computes the incoherence quantities of a (support, subspace) pair.
//! * [`certificate`] builds the dual certificate that proves a split is the unique optimum.
//! * [`ensembles`] and [`experiments`] generate random instances and run recovery studies.

pub mod certificate;
pub mod ensembles;
pub mod error;
pub mod experiments;
pub mod io;
pub mod matrix;
pub mod rng;
pub mod solver;
pub mod tangent;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use matrix::{DenseMatrix, SupportPattern};
