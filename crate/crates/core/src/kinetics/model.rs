use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::Error;

/// External forcing of the three linear systems: free particle, harmonic
/// binding `F = -mω²x`, and a constant magnetic field along the third axis
/// with cyclotron frequency `ω_c = eB/m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForceKind {
    Free,
    Harmonic { omega: f64 },
    Magnetic { omega_c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceField {
    pub kind: ForceKind,
    /// Particle mass. Only enters when a force (rather than an
    /// acceleration) is reported.
    pub mass: f64,
}

impl ForceField {
    pub fn free() -> Self {
        Self {
            kind: ForceKind::Free,
            mass: 1.0,
        }
    }

    pub fn harmonic(omega: f64) -> Self {
        Self {
            kind: ForceKind::Harmonic { omega },
            mass: 1.0,
        }
    }

    pub fn magnetic(omega_c: f64) -> Self {
        Self {
            kind: ForceKind::Magnetic { omega_c },
            mass: 1.0,
        }
    }

    pub fn with_mass(mut self, mass: f64) -> Self {
        self.mass = mass;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(invalid("mass", format!("must be positive, got {}", self.mass)));
        }
        match self.kind {
            ForceKind::Free => Ok(()),
            ForceKind::Harmonic { omega } if omega >= 0.0 && omega.is_finite() => Ok(()),
            ForceKind::Magnetic { omega_c } if omega_c >= 0.0 && omega_c.is_finite() => Ok(()),
            ForceKind::Harmonic { omega } => {
                Err(invalid("omega", format!("must be non-negative, got {omega}")))
            }
            ForceKind::Magnetic { omega_c } => Err(invalid(
                "omega_c",
                format!("must be non-negative, got {omega_c}"),
            )),
        }
    }

    /// Configuration-space dimension: 2 for the magnetic (planar) case,
    /// 1 otherwise.
    pub fn n_dim(&self) -> usize {
        match self.kind {
            ForceKind::Magnetic { .. } => 2,
            _ => 1,
        }
    }

    pub fn is_conservative(&self) -> bool {
        !matches!(self.kind, ForceKind::Magnetic { .. })
    }

    /// `F/m` at position `x` for the one-dimensional conservative systems.
    pub fn acceleration(&self, x: f64) -> Result<f64> {
        match self.kind {
            ForceKind::Free => Ok(0.0),
            ForceKind::Harmonic { omega } => Ok(-omega * omega * x),
            ForceKind::Magnetic { .. } => Err(Error::DimensionMismatch(
                "the Lorentz force needs both in-plane velocity components".into(),
            )),
        }
    }

    /// Spatial derivative of `F/m` (constant for the linear systems).
    pub fn acceleration_gradient(&self) -> Result<f64> {
        match self.kind {
            ForceKind::Free => Ok(0.0),
            ForceKind::Harmonic { omega } => Ok(-omega * omega),
            ForceKind::Magnetic { .. } => Err(Error::DimensionMismatch(
                "the Lorentz force has no scalar gradient".into(),
            )),
        }
    }
}

/// Environment coupling. `Frictionless` keeps only velocity diffusion,
/// `Kramers` adds linear friction, `Smoluchowski` is the overdamped
/// configuration-space limit with `q = Dβ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regime {
    Frictionless { q: f64 },
    Kramers { q: f64, beta: f64 },
    Smoluchowski { diffusion_d: f64, beta: f64 },
}

impl Regime {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &'static str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be non-negative, got {v}")))
            }
        };
        match *self {
            Regime::Frictionless { q } => nonneg("q", q),
            Regime::Kramers { q, beta } => {
                nonneg("q", q)?;
                nonneg("beta", beta)
            }
            Regime::Smoluchowski { diffusion_d, beta } => {
                nonneg("diffusion_d", diffusion_d)?;
                if beta > 0.0 && beta.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("beta", format!("must be positive, got {beta}")))
                }
            }
        }
    }

    /// Whether the state carries velocities (phase space) or only positions.
    pub fn is_phase_space(&self) -> bool {
        !matches!(self, Regime::Smoluchowski { .. })
    }

    pub fn friction(&self) -> f64 {
        match *self {
            Regime::Frictionless { .. } => 0.0,
            Regime::Kramers { beta, .. } | Regime::Smoluchowski { beta, .. } => beta,
        }
    }
}
