//! Hydrodynamic moments on a grid and finite-difference residuals of the
//! continuity and momentum conservation laws.

mod bootstrap;
mod fields;
mod grid;
mod residual;
mod stencil;

pub use bootstrap::{bootstrap_covariance_errors, bootstrap_residual_errors, bootstrap_standard_errors, DEFAULT_RESAMPLES};
pub use fields::{estimate_fields, fields_from_analytic, HydroField, COVERAGE, MIN_COUNT};
pub use grid::{Grid1D, MIN_CELLS};
pub use residual::{
    continuity_residual, fit_quantum_coefficient, kinetic_pressure_force, momentum_residual, momentum_residual_damped,
    pressure_identity_residual, CoefficientFit, FieldTriplet, Residual, SignConvention, DEGENERATE_QP,
};
pub use stencil::{quantum_potential_term, QuantumPotential, DENSITY_FLOOR, RELATIVE_DENSITY_CUTOFF};
