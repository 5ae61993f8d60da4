//! Monte Carlo and quadrature estimators for Lyapunov spectra of matrix
//! cocycles over leafwise Brownian motion on model laminations.

pub mod bounds;
pub mod cocycle;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod lamination;
pub mod linalg;
pub mod lyapunov;
pub mod quadrature;
pub mod rng;
pub mod wiener;

pub use error::{Error, Result};
