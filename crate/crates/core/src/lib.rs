//! Spectral Birkhoff normal-form toolkit for the 1-D nonlinear Klein-Gordon
//! equation with a convolution potential on `[0, pi]` with Dirichlet boundary
//! conditions.
//!
//! The crate covers the full computational chain:
//!
//! * [`spectral`] — potential coefficients, eigenvalues `lambda_k = k^2 + v_k`,
//!   linear frequencies `omega_k = c sqrt(c^2 + lambda_k)` and the smoothing
//!   multipliers of the half-wave operator;
//! * [`state`] — truncated phase-space points `(xi, eta)`, exponentially
//!   weighted analytic norms, tail norms and actions;
//! * [`poly`] — sparse zero-momentum polynomial algebra with Poisson brackets
//!   and Hamiltonian vector fields;
//! * [`nonlin`] — Taylor expansion of the nonlinearity into homogeneous
//!   polynomials with exact sine-product integrals;
//! * [`resonance`] — small-divisor enumeration, non-resonance checks and
//!   Monte-Carlo measure estimates for the excluded parameter set;
//! * [`normal_form`] — homological equation, Bernoulli-weighted recursive
//!   Lie-transform construction and numeric remainder probes;
//! * [`integrator`] — symplectic split-step simulation and the stability
//!   experiments;
//! * [`config`] / [`pipeline`] — reproducible run configuration, caching and
//!   artifact emission shared by the CLI;
//! * [`acceptance`] — the quantitative verification suite behind
//!   `nlkg verify-all`.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod integrator;
pub mod nonlin;
pub mod normal_form;
pub mod ode;
pub mod pipeline;
pub mod poly;
pub mod resonance;
pub mod rng;
pub mod spectral;
pub mod state;

pub use error::{Error, Result};

/// Complex scalar used throughout the coefficient algebra and states.
pub type C64 = num_complex::Complex64;
