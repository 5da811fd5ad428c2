//! Numerical toolkit for Borel-Laplace summation of singularly perturbed
//! convolution equations of order `k`.
//!
//! The pipeline runs `problem` (data + hypotheses) → `geometry` (singular
//! directions, coverings, lower bounds on the Borel symbol) → `solver`
//! (fixed point in the Borel plane) → `analysis` (Laplace–Fourier
//! reconstruction, exponential flatness, Gevrey fits). `transforms` and
//! `convolution` hold the discretized operators shared by all stages.

pub mod analysis;
pub mod checks;
pub mod cli;
pub mod convolution;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod solver;
pub mod special;
pub mod transforms;

pub use error::{Error, Result};
pub use num_complex::Complex64;
