//! Stochastic dynamics of the linear systems: model definitions, exact
//! Gaussian transitions, Monte Carlo ensembles and collision moments.

mod collision;
mod ensemble;
mod model;
mod noise;
mod transition;

pub use collision::{collision_moments, CollisionMoments, DensityMoments};
pub use ensemble::{simulate, Ensemble, Integrator, PhaseMoments, PhasePoint, Scenario};
pub use model::{ForceField, ForceKind, Regime};
pub use noise::NORMALS_PER_STEP;
pub use transition::{linear_sde, propagate_gaussian, transition, transition_van_loan, GaussianState, StateLayout, Transition};
