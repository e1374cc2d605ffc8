//! Reduced-order modelling of nonlinear PDEs with sparse interpolation
//! points.
//!
//! The crate builds POD bases from snapshot data, selects interpolation
//! indices with DEIM and classical gappy-POD strategies, classifies the
//! active dynamical regime from a handful of samples, and refines the
//! indices with a mutation-only genetic search. An exhaustive search over a
//! small window certifies how close the refined points are to optimal.
//! Snapshot data comes from a Fourier spectral solver for the
//! cubic-quintic Ginzburg-Landau equation or from matrix files.
//!
//! Data-parallel loops (candidate evaluation, noisy classification rounds,
//! GA fitness) run on rayon when the `parallel` feature is enabled, and
//! sequentially otherwise. Results are identical either way.

pub mod brute;
pub mod config;
pub mod cqgle;
pub mod deim;
pub mod error;
pub mod ga;
pub mod gappy;
pub mod integrate;
pub mod library;
pub mod linalg;
pub mod matrix_io;
pub mod par;
pub mod pipeline;
pub mod pod;
pub mod rng;
pub mod rom;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Dense complex matrix used throughout.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;

/// Version string stamped into report headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
