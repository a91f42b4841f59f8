//! Gradient-free stochastic optimization with the averaged Kiefer–Wolfowitz
//! (AKW) scheme, plus two online inference engines for the averaged iterate:
//! a plug-in sandwich covariance estimator and fixed-b random scaling.
//!
//! The dense kernel in [`numkernel`] and the covariance analytics are generic
//! over the floating-point scalar (anything implementing [`Real`]); the
//! optimizer, loss oracles and simulation harness run on `f64`. The aliases
//! below name the `f64` instantiations used throughout the crate.

pub mod directions;
pub mod error;
pub mod harness;
pub mod kwengine;
pub mod models;
pub mod numkernel;
pub mod plugin;
pub mod random_scaling;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

/// Symmetric matrix over `f64`.
pub type SymMatrixF64 = numkernel::SymMatrix<f64>;
/// Symmetric matrix over `f32`.
pub type SymMatrixF32 = numkernel::SymMatrix<f32>;
/// Square (not necessarily symmetric) matrix over `f64`.
pub type SquareMatrixF64 = numkernel::SquareMatrix<f64>;
/// Eigendecomposition over `f64`.
pub type EigenF64 = numkernel::EigenDecomposition<f64>;
/// Parameter vectors, directions and covariates.
pub type Vector = Vec<f64>;
