//! Large-friction (Smoluchowski) regime: current velocity, the potentials
//! `Ω` and `Q`, the magnetic rescaling of `Q`, and the sign-flipped recoil
//! diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hydro::{quantum_potential_term, FieldTriplet, Grid1D, HydroField, QuantumPotential, Residual, RELATIVE_DENSITY_CUTOFF};
use crate::kinetics::ForceField;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoluchowskiContext {
    pub beta: f64,
    pub diffusion_d: f64,
    pub force: ForceField,
}

impl SmoluchowskiContext {
    pub fn new(beta: f64, diffusion_d: f64, force: ForceField) -> Result<Self> {
        let ctx = Self { beta, diffusion_d, force };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        if !(self.diffusion_d > 0.0 && self.diffusion_d.is_finite()) {
            return Err(invalid("diffusion_d", format!("must be positive, got {}", self.diffusion_d)));
        }
        self.force.validate()
    }

    fn drift(&self, x: f64) -> Result<f64> {
        if !self.force.is_conservative() {
            return Err(Error::Unsupported(
                "the overdamped regime has no Ω for the magnetic force".into(),
            ));
        }
        Ok(self.force.acceleration(x)? / self.beta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurrentVelocity {
    pub v: Vec<f64>,
    pub mask: Vec<bool>,
}

/// `v = F/(mβ) − D∂ₓρ/ρ` with a centered difference. Edge cells and cells
/// below the relative density cutoff are masked.
pub fn current_velocity(rho: &[f64], grid: &Grid1D, ctx: &SmoluchowskiContext) -> Result<CurrentVelocity> {
    ctx.validate()?;
    grid.validate()?;
    if rho.len() != grid.n_cells {
        return Err(Error::Misaligned(format!("{} densities for {} cells", rho.len(), grid.n_cells)));
    }
    let n = grid.n_cells;
    let h = grid.spacing();
    let cutoff = RELATIVE_DENSITY_CUTOFF * rho.iter().cloned().fold(0.0, f64::max);
    let mut v = vec![f64::NAN; n];
    let mut mask = vec![true; n];
    for i in 1..n - 1 {
        let drift = ctx.drift(grid.center(i))?;
        if rho[i] > 0.0 && rho[i] >= cutoff {
            v[i] = drift - ctx.diffusion_d * (rho[i + 1] - rho[i - 1]) / (2.0 * h * rho[i]);
            mask[i] = false;
        }
    }
    Ok(CurrentVelocity { v, mask })
}

/// `Ω = ½(F/(mβ))² + D∂ₓ(F/(mβ))`.
pub fn omega_potential(x: f64, ctx: &SmoluchowskiContext) -> Result<f64> {
    let w = ctx.drift(x)?;
    Ok(0.5 * w * w + ctx.diffusion_d * ctx.force.acceleration_gradient()? / ctx.beta)
}

/// `∂ₓΩ` in closed form (the forces are linear, so `∂ₓ²F = 0`).
pub fn omega_gradient(x: f64, ctx: &SmoluchowskiContext) -> Result<f64> {
    Ok(ctx.drift(x)? * ctx.force.acceleration_gradient()? / ctx.beta)
}

/// `β²/(β² + ω_c²)`.
pub fn rescaling_factor(beta: f64, omega_c: f64) -> f64 {
    let b2 = beta * beta;
    b2 / (b2 + omega_c * omega_c)
}

/// `Q = 2D²·Δρ^½/ρ^½`, rescaled by `β²/(β² + ω_c²)` when a cyclotron
/// frequency is given. `qp_term` is left unscaled.
pub fn smoluchowski_q(rho: &[f64], grid: &Grid1D, ctx: &SmoluchowskiContext, omega_c: Option<f64>) -> Result<QuantumPotential> {
    ctx.validate()?;
    let factor = omega_c.map_or(1.0, |w| rescaling_factor(ctx.beta, w));
    let d2 = ctx.diffusion_d * ctx.diffusion_d;
    quantum_potential_term(rho, grid.spacing(), d2 * factor)
}

/// Overdamped field from a density alone, with `v` the current velocity.
pub fn smoluchowski_field(t: f64, rho: Vec<f64>, grid: &Grid1D, ctx: &SmoluchowskiContext) -> Result<HydroField> {
    let cv = current_velocity(&rho, grid, ctx)?;
    let qp = quantum_potential_term(&rho, grid.spacing(), 1.0)?;
    let n = grid.n_cells;
    Ok(HydroField {
        t,
        grid: *grid,
        v: cv.v,
        var_u: vec![f64::NAN; n],
        p_kin: vec![f64::NAN; n],
        qp_term: qp.qp_term,
        counts: None,
        mask: (0..n).map(|i| cv.mask[i] || qp.mask[i]).collect(),
        coverage_warning: false,
        rho,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `(∂ₜ + v∂ₓ)v = ∇(Ω − Q)`
    Standard,
    /// `(∂ₜ + v∂ₓ)v = ∇(Q − Ω)`
    Recoil,
}

/// Residual of the overdamped momentum law, `Q = 2D²Δρ^½/ρ^½`.
pub fn smoluchowski_momentum_residual(triplet: &FieldTriplet, ctx: &SmoluchowskiContext, variant: Variant) -> Result<Residual> {
    ctx.validate()?;
    let grid = *triplet.grid();
    let d2 = ctx.diffusion_d * ctx.diffusion_d;
    let s = match variant {
        Variant::Standard => 1.0,
        Variant::Recoil => -1.0,
    };
    let n = grid.n_cells;
    let h = grid.spacing();
    let (before, at, after) = (triplet.before, triplet.at, triplet.after);
    let delta = triplet.delta();
    let mut values = vec![f64::NAN; n];
    let mut mask = vec![true; n];
    for i in 1..n - 1 {
        let grad_omega = omega_gradient(grid.center(i), ctx)?;
        if (i - 1..=i + 1).any(|j| at.mask[j]) || before.mask[i] || after.mask[i] {
            continue;
        }
        let lhs = (after.v[i] - before.v[i]) / (2.0 * delta) + at.v[i] * (at.v[i + 1] - at.v[i - 1]) / (2.0 * h);
        values[i] = lhs - s * (grad_omega - 2.0 * d2 * at.qp_term[i]);
        mask[i] = false;
    }
    Ok(Residual {
        x: grid.centers(),
        values,
        stat_error: None,
        mask,
    })
}
