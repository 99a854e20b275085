//! Dual lattice matrices for one-dimensional quasi-periodic Schrodinger operators,
//! Schur-complement multiscale inversion, resonance geometry on the quasi-momentum
//! axis, continued-fraction root solvers, and desk-scale checks of gap/coefficient
//! relations against dense eigensolver oracles.
//!
//! Data-parallel loops go through [`exec::Exec`]; with the `parallel` feature off
//! every loop runs sequentially.

pub mod dual_operator;
pub mod error;
pub mod exec;
pub mod inverse;
pub mod lattice;
pub mod model;
pub mod mssets;
pub mod resonance;
pub mod sampling;
pub mod schur;
pub mod spectral;
pub mod trajectories;

pub use error::{QpError, Result};
pub use num_complex::Complex64;
