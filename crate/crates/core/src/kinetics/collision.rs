use serde::Serialize;

use super::model::Regime;
use crate::error::Result;
use crate::Error;

/// Local velocity moments of a phase-space density at one position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityMoments {
    pub rho: f64,
    /// Mean velocity `⟨u⟩`.
    pub v: f64,
    /// Raw second moment `⟨u²⟩` (not the variance).
    pub second_moment: f64,
}

/// `∫ uᵏ C(f) du` for `k = 0, 1, 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionMoments {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
}

/// Velocity moments of the collision operator `C(f) = β∂ᵤ(uf) + q∂ᵤ²f`.
pub fn collision_moments(moments: &DensityMoments, regime: &Regime) -> Result<CollisionMoments> {
    regime.validate()?;
    let (q, beta) = match *regime {
        Regime::Frictionless { q } => (q, 0.0),
        Regime::Kramers { q, beta } => (q, beta),
        Regime::Smoluchowski { .. } => {
            return Err(Error::Unsupported(
                "the overdamped regime has no velocity collision operator".into(),
            ))
        }
    };
    let DensityMoments { rho, v, second_moment } = *moments;
    Ok(CollisionMoments {
        m0: 0.0,
        m1: -beta * rho * v,
        m2: 2.0 * q * rho - 2.0 * beta * rho * second_moment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Quadrature of `uᵏ C(f)` for `f = ρ N(u; v, s²)` with the derivatives
    /// written out by hand.
    fn quadrature(rho: f64, v: f64, s2: f64, q: f64, beta: f64) -> [f64; 3] {
        let n = 20_000;
        let half = 14.0 * s2.sqrt();
        let du = 2.0 * half / n as f64;
        let mut out = [0.0; 3];
        for i in 0..=n {
            let u = v - half + i as f64 * du;
            let z = u - v;
            let f = rho * (-z * z / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt();
            let df = -z / s2 * f;
            let d2f = (z * z / (s2 * s2) - 1.0 / s2) * f;
            let c = beta * (f + u * df) + q * d2f;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 } * du;
            out[0] += w * c;
            out[1] += w * u * c;
            out[2] += w * u * u * c;
        }
        out
    }

    #[test]
    fn moments_match_quadrature() {
        for &(rho, v, s2, q, beta) in &[(0.7, 0.3, 1.2, 0.5, 0.9), (2.0, -1.1, 0.4, 1.3, 0.0), (0.1, 2.5, 3.0, 0.0, 2.0)] {
            let regime = if beta == 0.0 { Regime::Frictionless { q } } else { Regime::Kramers { q, beta } };
            let m = collision_moments(&DensityMoments { rho, v, second_moment: s2 + v * v }, &regime).unwrap();
            let num = quadrature(rho, v, s2, q, beta);
            for (a, b) in [m.m0, m.m1, m.m2].iter().zip(num) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn overdamped_is_rejected() {
        let m = DensityMoments { rho: 1.0, v: 0.0, second_moment: 1.0 };
        assert!(collision_moments(&m, &Regime::Smoluchowski { diffusion_d: 1.0, beta: 1.0 }).is_err());
    }
}
