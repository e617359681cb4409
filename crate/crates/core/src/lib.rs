//! Phase-space stochastic kinetics.
//!
//! Closed-form Gaussian propagation for frictionless phase-space diffusion,
//! Monte Carlo Langevin ensembles in the frictionless, Kramers and
//! Smoluchowski regimes, hydrodynamic moment extraction, and finite-difference
//! residuals of the continuity and momentum conservation laws, including the
//! quantum-potential-shaped pressure term `∇[Δρ^½/ρ^½]`.
//!
//! Modules:
//! - [`analytic`]: covariance entries, Kolmogorov kernel, marginals,
//!   conditional moments, `d²(t)` coefficients, coherent states.
//! - [`kinetics`]: force fields, regimes, exact and Euler–Maruyama ensemble
//!   steps, scenario simulation, collision-operator moments.
//! - [`hydro`]: gridded fields, quantum-potential stencil, residuals, fits.
//! - [`regimes`]: Smoluchowski current velocity, `Ω`, `Q`, recoil variant.

pub mod analytic;
mod error;
pub mod hydro;
pub mod kinetics;
mod linalg;
pub mod regimes;

pub use error::{Error, Result};
