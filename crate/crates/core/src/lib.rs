//! Optimal-transport (Wasserstein) metric of one-dimensional non-Hermitian
//! lattice spectra under an imaginary gauge field.
//!
//! The crate is organised bottom-up:
//!
//! - [`eigensolve`]: dense complex eigenvalues, biorthogonal frames, polynomial roots.
//! - [`model`]: Laurent-polynomial Bloch Hamiltonians and their finite lattices.
//! - [`transport`]: exact min-cost matching between spectra and the finite-difference metric.
//! - [`metric`]: thermodynamic metric, singularity and minimum detection, aGBZ ranges.
//! - [`gbzoracle`]: independent root-sorting computation of GBZ/aGBZ data and winding numbers.
//! - [`quasi`]: quasiperiodic chains, their duals, h-space metric and Lyapunov exponents.
//! - [`cli`]: configuration-driven sweeps with CSV and SVG output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod eigensolve;
pub mod error;
pub mod gbzoracle;
pub mod metric;
pub mod model;
pub mod quasi;
pub mod transport;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Complex scalar used throughout the crate.
pub type C64 = Complex64;
