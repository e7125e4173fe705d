//! Completeness diagnostics for two-asset markets driven by a 2D diffusion.
//!
//! The market consists of a forward asset `S^F` generated by a smooth function
//! `f` of the diffusion state and a derivative asset `S^B` written on a
//! terminal payoff `g`. The library prices the derivative with a theta-scheme
//! finite-difference solver, inspects the Jacobian determinant of `(f, v)`
//! along the solution, and decides completeness either through a rank check of
//! `J[f, g]` at the horizon or through a weak bilinear pairing against a
//! library of test functions. A Monte Carlo engine replicates claims with the
//! two traded assets and reports discrete hedging error.

pub mod completeness;
pub mod determinant;
pub mod envelope;
pub mod error;
pub mod field;
pub mod grid;
pub mod hedging;
pub mod jacobian;
pub mod mat2;
pub mod model;
pub mod operators;
pub mod pairing;
pub mod paths;
pub mod payoff;
pub mod probes;
pub mod quadrature;
pub mod residuals;
pub mod smooth1d;
pub mod solver;
pub mod stochvol;

pub use error::Error;
pub use field::{CoefficientField, DerivCaps, ScalarField};
pub use grid::{DomainBox, SpaceTimeGrid, ValueField};
pub use mat2::Mat2;
pub use model::DiffusionModel;
pub use payoff::Payoff;

/// Point of the two-dimensional state space.
pub type Point = [f64; 2];

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
