//! Closed-form Gaussian phase-space dynamics.
//!
//! Everything here is a pure function of its inputs. Densities are in
//! `1/length` (position), `1/velocity` (velocity) or
//! `1/(length·velocity)` (joint); covariance entries carry the dimensions
//! documented on [`CovarianceEntries`]. Units are whatever the caller uses,
//! as long as they are consistent.
//!
//! Notation: `R = x − x̄(t)` is the position offset from the mean trajectory
//! (`x_ini + u_ini·t` in the free case) and `S = u − ū(t)` the velocity
//! offset. `e`, `g`, `h` are `⟨R²⟩`, `⟨S²⟩`, `⟨RS⟩`; the magnetic case adds
//! the cross entry `k = ⟨R_y S_x⟩`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_time, invalid, Result};
use crate::kinetics::{ForceField, ForceKind};
use crate::Error;

/// Below this value of `ω·t` the trigonometric `d²` forms are replaced by
/// their fourth-order series. At this point both the series truncation and
/// the cancellation error of the trigonometric form stay near 1e-9 relative.
pub const SERIES_SWITCH: f64 = 0.07;

/// Noise intensity `q` (velocity²/time), friction `β` (1/time) and spatial
/// diffusion `D` (length²/time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub q: f64,
    pub beta: f64,
    pub diffusion_d: f64,
}

impl NoiseParams {
    pub fn frictionless(q: f64) -> Result<Self> {
        Self::new(q, 0.0, 0.0)
    }

    /// Dissipative parameters with the fluctuation–dissipation value `q = Dβ²`.
    pub fn from_friction(beta: f64, diffusion_d: f64) -> Result<Self> {
        Self::new(diffusion_d * beta * beta, beta, diffusion_d)
    }

    pub fn new(q: f64, beta: f64, diffusion_d: f64) -> Result<Self> {
        for (name, v) in [("q", q), ("beta", beta), ("diffusion_d", diffusion_d)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        if beta > 0.0 && diffusion_d > 0.0 {
            let expected = diffusion_d * beta * beta;
            if (q - expected).abs() > 1e-12 * expected {
                return Err(invalid(
                    "q",
                    format!("q = {q} violates q = D·β² = {expected}"),
                ));
            }
        }
        Ok(Self {
            q,
            beta,
            diffusion_d,
        })
    }
}

/// Factorized Gaussian initial phase-space density: position centered on
/// `x_ini` with std `a`, velocity centered on `u_ini` with std `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialGaussian {
    pub x_ini: f64,
    pub u_ini: f64,
    pub a: f64,
    pub b: f64,
}

impl InitialGaussian {
    pub fn new(x_ini: f64, u_ini: f64, a: f64, b: f64) -> Result<Self> {
        let init = Self { x_ini, u_ini, a, b };
        init.validate()?;
        Ok(init)
    }

    pub fn centered(a: f64, b: f64) -> Result<Self> {
        Self::new(0.0, 0.0, a, b)
    }

    pub fn with_center(mut self, x_ini: f64, u_ini: f64) -> Self {
        self.x_ini = x_ini;
        self.u_ini = u_ini;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(invalid("a", format!("must be positive, got {}", self.a)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(invalid("b", format!("must be positive, got {}", self.b)));
        }
        if !(self.x_ini.is_finite() && self.u_ini.is_finite()) {
            return Err(invalid("x_ini/u_ini", "must be finite"));
        }
        Ok(())
    }
}

/// Second moments of the propagated phase-space Gaussian.
///
/// `e` is length², `g` velocity², `h` and `k` length·velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEntries {
    pub e: f64,
    pub g: f64,
    pub h: f64,
    pub k: Option<f64>,
}

impl CovarianceEntries {
    /// `e·g − h² − k²`, the squared coefficient `d²` of the pressure term.
    pub fn determinant(&self) -> f64 {
        let k = self.k.unwrap_or(0.0);
        self.e * self.g - self.h * self.h - k * k
    }

    /// Velocity variance conditioned on position, `g − (h² + k²)/e`.
    pub fn conditional_variance(&self) -> f64 {
        self.determinant() / self.e
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e > 0.0 && self.g > 0.0) {
            return Err(invalid(
                "covariance",
                format!("e and g must be positive, got e={} g={}", self.e, self.g),
            ));
        }
        let det = self.determinant();
        if det < 0.0 {
            return Err(Error::NotPositiveDefinite(det));
        }
        Ok(())
    }
}

/// `ħ`, `m`, `ω` used to fix the initial widths by the minimum-uncertainty
/// condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumScale {
    pub hbar: f64,
    pub m: f64,
    pub omega: f64,
}

impl QuantumScale {
    pub fn new(hbar: f64, m: f64, omega: f64) -> Result<Self> {
        for (name, v) in [("hbar", hbar), ("m", m), ("omega", omega)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(Self { hbar, m, omega })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMoments {
    /// `⟨u⟩ₓ`
    pub mean: f64,
    /// `⟨u²⟩ₓ − ⟨u⟩ₓ²`
    pub variance: f64,
}

/// Mean trajectory of the phase-space Gaussian. The second components are
/// only non-zero in the planar magnetic case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMean {
    pub x: [f64; 2],
    pub u: [f64; 2],
}

fn gaussian_pdf(z: f64, var: f64) -> f64 {
    (-z * z / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Covariance entries of the frictionless free particle.
pub fn covariance_entries_free(t: f64, init: &InitialGaussian, q: f64) -> Result<CovarianceEntries> {
    check_time(t)?;
    init.validate()?;
    Ok(free_entries(t, init.a * init.a, init.b * init.b, q))
}

fn free_entries(t: f64, a2: f64, b2: f64, q: f64) -> CovarianceEntries {
    CovarianceEntries {
        e: a2 + b2 * t * t + 2.0 / 3.0 * q * t.powi(3),
        g: b2 + 2.0 * q * t,
        h: b2 * t + q * t * t,
        k: None,
    }
}

/// Exact second moments for any of the three frictionless linear systems,
/// obtained by integrating the linear stochastic flow rather than from the
/// `d²` formulas. Magnetic results carry the cross entry `k`.
pub fn phase_covariance(
    system: &ForceField,
    t: f64,
    init: &InitialGaussian,
    q: f64,
) -> Result<CovarianceEntries> {
    check_time(t)?;
    init.validate()?;
    system.validate()?;
    Ok(entries_from_variances(system, t, init.a * init.a, init.b * init.b, q))
}

/// Transition covariance from a point source (`a = b = 0`). May be singular.
pub fn point_source_covariance(system: &ForceField, t: f64, q: f64) -> Result<CovarianceEntries> {
    check_time(t)?;
    system.validate()?;
    Ok(entries_from_variances(system, t, 0.0, 0.0, q))
}

fn entries_from_variances(system: &ForceField, t: f64, a2: f64, b2: f64, q: f64) -> CovarianceEntries {
    match system.kind {
        ForceKind::Free => free_entries(t, a2, b2, q),
        ForceKind::Harmonic { omega } => {
            let x = omega * t;
            let (s, c) = x.sin_cos();
            let sx = stable::sinc(x);
            CovarianceEntries {
                e: a2 * c * c + b2 * t * t * sx * sx + 4.0 * q * t.powi(3) * stable::x_minus_sin(2.0 * x),
                g: a2 * omega * omega * s * s + b2 * c * c + q * t * (1.0 + stable::sinc(2.0 * x)),
                h: -a2 * omega * s * c + b2 * t * sx * c + q * t * t * sx * sx,
                k: None,
            }
        }
        ForceKind::Magnetic { omega_c } => {
            let x = omega_c * t;
            let vers = stable::versine(x);
            let xms = stable::x_minus_sin(x);
            CovarianceEntries {
                e: a2 + 2.0 * b2 * t * t * vers + 4.0 * q * t.powi(3) * xms,
                g: b2 + 2.0 * q * t,
                h: b2 * t * stable::sinc(x) + 2.0 * q * t * t * vers,
                k: Some(b2 * t * x * vers + 2.0 * q * t * t * x * xms),
            }
        }
    }
}

/// Mean phase point at time `t`. For the magnetic case the initial mean
/// sits on the first axis: position `(x_ini, 0)`, velocity `(u_ini, 0)`.
pub fn phase_mean(system: &ForceField, t: f64, init: &InitialGaussian) -> Result<PhaseMean> {
    check_time(t)?;
    system.validate()?;
    let (x0, u0) = (init.x_ini, init.u_ini);
    Ok(match system.kind {
        ForceKind::Free => PhaseMean {
            x: [x0 + u0 * t, 0.0],
            u: [u0, 0.0],
        },
        ForceKind::Harmonic { omega } => {
            let x = omega * t;
            let (s, c) = x.sin_cos();
            PhaseMean {
                x: [x0 * c + u0 * t * stable::sinc(x), 0.0],
                u: [-x0 * omega * s + u0 * c, 0.0],
            }
        }
        ForceKind::Magnetic { omega_c } => {
            let x = omega_c * t;
            let (s, c) = x.sin_cos();
            PhaseMean {
                x: [x0 + u0 * t * stable::sinc(x), -u0 * t * x * stable::versine(x)],
                u: [u0 * c, -u0 * s],
            }
        }
    })
}

/// Kolmogorov's transition density of frictionless phase-space diffusion
/// from `(x0, u0)` at time 0 to `(x, u)` at time `t`.
pub fn kolmogorov_kernel(x: f64, u: f64, t: f64, x0: f64, u0: f64, q: f64) -> Result<f64> {
    check_time(t)?;
    if t == 0.0 {
        return Err(Error::DegenerateKernel("t = 0 is a point mass"));
    }
    if !(q > 0.0) {
        return Err(Error::DegenerateKernel("q = 0 is deterministic ballistic flow"));
    }
    let du = u - u0;
    let chord = x - x0 - 0.5 * (u + u0) * t;
    let prefactor = (1.0 / (2.0 * PI)) * (12.0f64.sqrt() / (2.0 * q * t * t));
    Ok(prefactor * (-du * du / (4.0 * q * t) - 3.0 * chord * chord / (q * t.powi(3))).exp())
}

/// Bivariate Gaussian `W(R, S)` with the given covariance entries.
pub fn joint_density(r: f64, s: f64, cov: &CovarianceEntries) -> Result<f64> {
    if cov.k.is_some() {
        return Err(Error::DimensionMismatch(
            "joint_density is the one-dimensional (R, S) density".into(),
        ));
    }
    let det = cov.determinant();
    if !(det > 0.0 && cov.e > 0.0 && cov.g > 0.0) {
        return Err(Error::NotPositiveDefinite(det));
    }
    let quad = cov.g * r * r - 2.0 * cov.h * r * s + cov.e * s * s;
    Ok((-quad / (2.0 * det)).exp() / (2.0 * PI * det.sqrt()))
}

/// Position marginal `ρ(x, t)` of the frictionless free particle.
pub fn marginal_position(x: f64, t: f64, init: &InitialGaussian, q: f64) -> Result<f64> {
    let cov = covariance_entries_free(t, init, q)?;
    Ok(gaussian_pdf(x - init.x_ini - init.u_ini * t, cov.e))
}

/// Velocity marginal `ρ(u, t)` of the frictionless free particle.
pub fn marginal_velocity(u: f64, t: f64, init: &InitialGaussian, q: f64) -> Result<f64> {
    let cov = covariance_entries_free(t, init, q)?;
    Ok(gaussian_pdf(u - init.u_ini, cov.g))
}

/// Position-conditioned velocity moments of the frictionless free particle.
pub fn conditional_moments(x: f64, t: f64, init: &InitialGaussian, q: f64) -> Result<ConditionalMoments> {
    let cov = covariance_entries_free(t, init, q)?;
    let r = x - init.x_ini - init.u_ini * t;
    Ok(ConditionalMoments {
        mean: init.u_ini + cov.h / cov.e * r,
        variance: cov.g - cov.h * cov.h / cov.e,
    })
}

/// The squared coefficient `d²(t)` of `∇[Δρ^½/ρ^½]` in the frictionless
/// momentum law, from the closed forms for each system.
///
/// May be negative only through rounding; callers that need a positive
/// coefficient should gate on the sign.
pub fn d2_coefficient(system: &ForceField, t: f64, init: &InitialGaussian, q: f64) -> Result<f64> {
    check_time(t)?;
    init.validate()?;
    system.validate()?;
    let (a2, b2) = (init.a * init.a, init.b * init.b);
    Ok(match system.kind {
        ForceKind::Free => d2_free(t, a2, b2, q),
        ForceKind::Magnetic { omega_c } => d2_magnetic(t, a2, b2, q, omega_c),
        ForceKind::Harmonic { omega } => d2_harmonic(t, a2, b2, q, omega),
    })
}

fn d2_free(t: f64, a2: f64, b2: f64, q: f64) -> f64 {
    a2 * b2 + 2.0 * a2 * q * t + 2.0 / 3.0 * b2 * q * t.powi(3) + q * q * t.powi(4) / 3.0
}

fn d2_magnetic(t: f64, a2: f64, b2: f64, q: f64, w: f64) -> f64 {
    let x = w * t;
    if x < SERIES_SWITCH {
        let x2 = x * x;
        let x4 = x2 * x2;
        a2 * b2
            + 2.0 * a2 * q * t
            + b2 * q * t.powi(3) * (2.0 / 3.0 - x2 / 30.0 + x4 / 1260.0)
            + q * q * t.powi(4) * (1.0 / 3.0 - x2 / 90.0 + x4 / 5040.0)
    } else {
        let (s, c) = x.sin_cos();
        a2 * b2 - 8.0 * q * q / w.powi(4) + 4.0 * b2 * q * t / (w * w) + 4.0 * q * q * t * t / (w * w)
            + 2.0 * a2 * q * t
            + 8.0 * q * q / w.powi(4) * c
            - 4.0 * b2 * q / w.powi(3) * s
    }
}

fn d2_harmonic(t: f64, a2: f64, b2: f64, q: f64, w: f64) -> f64 {
    let x = w * t;
    if x < SERIES_SWITCH {
        let x2 = x * x;
        let x4 = x2 * x2;
        a2 * b2
            + a2 * q * t * (2.0 - 2.0 * x2 / 3.0 + 2.0 * x4 / 15.0)
            + b2 * q * t.powi(3) * (2.0 / 3.0 - 2.0 * x2 / 15.0 + 4.0 * x4 / 315.0)
            + q * q * t.powi(4) * (1.0 / 3.0 - 2.0 * x2 / 45.0 + x4 / 315.0)
    } else {
        let w2 = w * w;
        let w4 = w2 * w2;
        (-q * q + 2.0 * b2 * q * t * w2 + 2.0 * q * q * t * t * w2 + 2.0 * a2 * b2 * w4
            + 2.0 * a2 * q * t * w4
            + q * q * (2.0 * x).cos()
            + q * w * (-b2 + a2 * w2) * (2.0 * x).sin())
            / (2.0 * w4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowSample {
    pub t: f64,
    pub d2: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityWindow {
    pub samples: Vec<WindowSample>,
    /// First time at which `d²` changes sign, bisected to relative 1e-10.
    pub sign_change: Option<f64>,
}

/// Samples `d²(t)` on `steps` uniform points of `[0, t_max]` and locates the
/// first sign change, if any.
pub fn positivity_window(
    system: &ForceField,
    init: &InitialGaussian,
    q: f64,
    t_max: f64,
    steps: usize,
) -> Result<PositivityWindow> {
    init.validate()?;
    system.validate()?;
    let (a2, b2) = (init.a * init.a, init.b * init.b);
    let d2 = |t: f64| match system.kind {
        ForceKind::Free => d2_free(t, a2, b2, q),
        ForceKind::Magnetic { omega_c } => d2_magnetic(t, a2, b2, q, omega_c),
        ForceKind::Harmonic { omega } => d2_harmonic(t, a2, b2, q, omega),
    };
    scan_sign_change(d2, t_max, steps)
}

/// Uniform scan of `f` over `[0, t_max]` followed by bisection of the first
/// bracketed sign change.
pub fn scan_sign_change(f: impl Fn(f64) -> f64, t_max: f64, steps: usize) -> Result<PositivityWindow> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(invalid("t_max", format!("must be positive, got {t_max}")));
    }
    if steps < 2 {
        return Err(invalid("steps", format!("need at least 2, got {steps}")));
    }
    let samples: Vec<WindowSample> = (0..steps)
        .map(|i| {
            let t = t_max * i as f64 / (steps - 1) as f64;
            let d2 = f(t);
            WindowSample {
                t,
                d2,
                positive: d2 > 0.0,
            }
        })
        .collect();
    let sign_change = samples.windows(2).find(|w| w[0].positive != w[1].positive).map(|w| {
        let (mut lo, mut hi) = (w[0].t, w[1].t);
        let lo_positive = w[0].positive;
        while hi - lo > 1e-10 * hi {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == lo_positive {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    });
    Ok(PositivityWindow {
        samples,
        sign_change,
    })
}

/// Minimum-uncertainty widths `a² = ħ/(2mω)`, `b² = ħω/(2m)`, centered at
/// the origin.
pub fn heisenberg_initial(scale: &QuantumScale) -> InitialGaussian {
    InitialGaussian {
        x_ini: 0.0,
        u_ini: 0.0,
        a: (scale.hbar / (2.0 * scale.m * scale.omega)).sqrt(),
        b: (scale.hbar * scale.omega / (2.0 * scale.m)).sqrt(),
    }
}

/// Position density of the harmonic-oscillator coherent state released
/// from rest at `x_ini`.
pub fn coherent_density(x: f64, t: f64, scale: &QuantumScale, x_ini: f64) -> f64 {
    let k = scale.m * scale.omega / scale.hbar;
    let z = x - x_ini * (scale.omega * t).cos();
    (k / PI).sqrt() * (-k * z * z).exp()
}

/// `∇ρ/ρ` for a Gaussian of variance `e` at offset `r` from its mean.
pub fn gaussian_log_gradient(r: f64, e: f64) -> f64 {
    -r / e
}

/// `Δρ^½/ρ^½` for a Gaussian of variance `e`.
pub fn gaussian_sqrt_laplacian_ratio(r: f64, e: f64) -> f64 {
    r * r / (4.0 * e * e) - 1.0 / (2.0 * e)
}

/// `∇[Δρ^½/ρ^½]` for a Gaussian of variance `e`.
pub fn gaussian_qp_term(r: f64, e: f64) -> f64 {
    r / (2.0 * e * e)
}

/// Cancellation-free trigonometric ratios, switching to series near zero.
mod stable {
    use super::SERIES_SWITCH;

    /// `sin x / x`
    pub fn sinc(x: f64) -> f64 {
        if x.abs() < SERIES_SWITCH {
            let x2 = x * x;
            1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0))
        } else {
            x.sin() / x
        }
    }

    /// `(1 − cos x)/x²`
    pub fn versine(x: f64) -> f64 {
        let s = sinc(0.5 * x);
        0.5 * s * s
    }

    /// `(x − sin x)/x³`
    pub fn x_minus_sin(x: f64) -> f64 {
        if x.abs() < SERIES_SWITCH {
            let x2 = x * x;
            1.0 / 6.0 - x2 / 120.0 + x2 * x2 / 5040.0 - x2 * x2 * x2 / 362_880.0
        } else {
            (x - x.sin()) / x.powi(3)
        }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn unit() -> InitialGaussian {
        InitialGaussian::centered(1.0, 1.0).unwrap()
    }

    #[test]
    fn free_covariance_examples() {
        let c = covariance_entries_free(0.0, &unit(), 1.0).unwrap();
        assert_eq!((c.e, c.g, c.h), (1.0, 1.0, 0.0));
        let c = covariance_entries_free(1.0, &unit(), 1.0).unwrap();
        assert_relative_eq!(c.e, 8.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(c.g, 3.0);
        assert_relative_eq!(c.h, 2.0);
        assert!(c.k.is_none());
        let c = covariance_entries_free(2.0, &unit(), 0.0).unwrap();
        assert_eq!((c.e, c.g, c.h), (5.0, 1.0, 2.0));
        assert!(matches!(
            covariance_entries_free(-1.0, &unit(), 1.0),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn kernel_peak_and_degenerate_inputs() {
        let p = kolmogorov_kernel(0.3 + 0.7, 0.7, 1.0, 0.3, 0.7, 1.0).unwrap();
        assert_relative_eq!(p, 3f64.sqrt() / (2.0 * PI), max_relative = 1e-15);
        assert_relative_eq!(p, 0.275_664, epsilon = 1e-6);
        assert!(matches!(
            kolmogorov_kernel(0.0, 0.0, 0.0, 0.0, 0.0, 1.0),
            Err(Error::DegenerateKernel(_))
        ));
        assert!(matches!(
            kolmogorov_kernel(0.0, 0.0, 1.0, 0.0, 0.0, 0.0),
            Err(Error::DegenerateKernel(_))
        ));
    }

    #[test]
    fn kernel_matches_point_source_gaussian() {
        // Kernel equals W(R, S) with the point-source covariance (a = b = 0).
        let cov = point_source_covariance(&ForceField::free(), 1.3, 0.8).unwrap();
        for &(x, u) in &[(0.2, -0.4), (1.5, 0.9), (-2.0, 1.1)] {
            let (x0, u0) = (0.1, 0.5);
            let w = joint_density(x - x0 - u0 * 1.3, u - u0, &cov).unwrap();
            let k = kolmogorov_kernel(x, u, 1.3, x0, u0, 0.8).unwrap();
            assert_relative_eq!(w, k, max_relative = 1e-12);
        }
    }

    #[test]
    fn joint_density_examples() {
        let std = CovarianceEntries { e: 1.0, g: 1.0, h: 0.0, k: None };
        assert_relative_eq!(joint_density(0.0, 0.0, &std).unwrap(), 1.0 / (2.0 * PI));
        let c = covariance_entries_free(1.0, &unit(), 1.0).unwrap();
        assert_relative_eq!(c.determinant(), 4.0, max_relative = 1e-14);
        assert_relative_eq!(joint_density(0.0, 0.0, &c).unwrap(), 1.0 / (4.0 * PI), max_relative = 1e-14);
        let bad = CovarianceEntries { e: 1.0, g: 1.0, h: 1.0, k: None };
        assert!(matches!(joint_density(0.0, 0.0, &bad), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn joint_density_marginalizes_to_position_marginal() {
        // Trapezoid rule in S over ±12 std devs is spectrally accurate here.
        let init = InitialGaussian::new(0.4, -0.3, 0.8, 1.2).unwrap();
        let (t, q) = (0.9, 0.7);
        let c = covariance_entries_free(t, &init, q).unwrap();
        let half = 12.0 * c.g.sqrt();
        let n = 4000;
        let ds = 2.0 * half / n as f64;
        for &x in &[-2.0, 0.0, 0.37, 1.9, 4.0] {
            let r = x - init.x_ini - init.u_ini * t;
            let integral: f64 = (0..=n)
                .map(|i| {
                    let s = -half + i as f64 * ds;
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    w * joint_density(r, s, &c).unwrap()
                })
                .sum::<f64>()
                * ds;
            assert!((integral - marginal_position(x, t, &init, q).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn marginal_examples() {
        let p = marginal_position(0.0, 1.0, &unit(), 1.0).unwrap();
        assert_relative_eq!(p, 1.0 / (2.0 * PI * 8.0 / 3.0).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(p, 0.244_301, epsilon = 1e-6);
        let v = marginal_velocity(0.0, 1.0, &unit(), 1.0).unwrap();
        assert_relative_eq!(v, 0.230_329, epsilon = 1e-6);
        let init = InitialGaussian::new(0.5, 2.0, 0.7, 1.0).unwrap();
        for &x in &[-1.0, 0.5, 2.2] {
            let expected = (-(x - 0.5f64).powi(2) / (2.0 * 0.49)).exp() / (2.0 * PI * 0.49f64).sqrt();
            assert_relative_eq!(marginal_position(x, 0.0, &init, 3.0).unwrap(), expected, max_relative = 1e-15);
        }
    }

    #[test]
    fn conditional_moment_examples() {
        let init = InitialGaussian::new(0.0, 0.5, 1.0, 1.0).unwrap();
        let m = conditional_moments(0.5, 1.0, &init, 1.0).unwrap();
        assert_eq!(m.mean, 0.5);
        let m = conditional_moments(1.5, 1.0, &init, 1.0).unwrap();
        assert_relative_eq!(m.mean - 0.5, 0.75, max_relative = 1e-14);
        assert_relative_eq!(m.variance, 1.5, max_relative = 1e-14);
        let c = covariance_entries_free(1.0, &init, 1.0).unwrap();
        assert_relative_eq!(m.variance, c.determinant() / c.e, max_relative = 1e-14);

        let v0 = conditional_moments(-3.0, 1.7, &init, 0.4).unwrap().variance;
        for i in 0..10 {
            let x = -4.0 + i as f64;
            assert_eq!(conditional_moments(x, 1.7, &init, 0.4).unwrap().variance, v0);
        }
    }

    #[test]
    fn d2_examples() {
        let free = d2_coefficient(&ForceField::free(), 1.0, &unit(), 1.0).unwrap();
        assert_relative_eq!(free, 4.0, max_relative = 1e-15);
        let init = InitialGaussian::centered(0.7, 1.3).unwrap();
        let a2b2 = 0.49 * 1.69;
        for sys in [ForceField::magnetic(3.0), ForceField::harmonic(2.5)] {
            assert_relative_eq!(d2_coefficient(&sys, 0.0, &init, 0.9).unwrap(), a2b2, max_relative = 1e-14);
        }
        let m = d2_coefficient(&ForceField::magnetic(1e-4), 1.0, &unit(), 1.0).unwrap();
        assert_relative_eq!(m, free, max_relative = 1e-6);
    }

    #[test]
    fn d2_printed_forms_equal_exact_covariance_determinants() {
        let init = InitialGaussian::centered(0.6, 1.4).unwrap();
        for sys in [
            ForceField::magnetic(0.3),
            ForceField::magnetic(2.0),
            ForceField::magnetic(10.0),
            ForceField::harmonic(0.5),
            ForceField::harmonic(3.0),
        ] {
            for &t in &[0.01, 0.2, 1.0, 2.7, 6.0] {
                for &q in &[0.0, 0.3, 2.0] {
                    let d2 = d2_coefficient(&sys, t, &init, q).unwrap();
                    let det = phase_covariance(&sys, t, &init, q).unwrap().determinant();
                    assert_relative_eq!(d2, det, max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn series_and_trigonometric_branches_agree_at_the_switch() {
        let init = unit();
        for (w, sys) in [(1.0, ForceField::magnetic(1.0)), (1.0, ForceField::harmonic(1.0))] {
            let t_lo = SERIES_SWITCH / w * (1.0 - 1e-9);
            let t_hi = SERIES_SWITCH / w * (1.0 + 1e-9);
            let lo = d2_coefficient(&sys, t_lo, &init, 1.0).unwrap();
            let hi = d2_coefficient(&sys, t_hi, &init, 1.0).unwrap();
            assert_relative_eq!(lo, hi, max_relative = 1e-8);
        }
    }

    #[test]
    fn small_frequency_limits_reduce_to_free() {
        for &t in &[0.1, 1.0, 5.0] {
            let free = d2_coefficient(&ForceField::free(), t, &unit(), 1.0).unwrap();
            for sys in [ForceField::magnetic(1e-4), ForceField::harmonic(1e-4)] {
                let d2 = d2_coefficient(&sys, t, &unit(), 1.0).unwrap();
                assert_relative_eq!(d2, free, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn free_positivity_window_never_changes_sign() {
        let w = positivity_window(&ForceField::free(), &unit(), 5.0, 10.0, 200).unwrap();
        assert!(w.samples.iter().all(|s| s.positive));
        assert!(w.sign_change.is_none());
    }

    #[test]
    fn harmonic_without_noise_is_constant() {
        let init = InitialGaussian::centered(0.8, 0.3).unwrap();
        let w = positivity_window(&ForceField::harmonic(2.0), &init, 0.0, 20.0, 500).unwrap();
        assert!(w.sign_change.is_none());
        for s in &w.samples {
            assert_relative_eq!(s.d2, 0.64 * 0.09, max_relative = 1e-12);
        }
    }

    #[test]
    fn magnetic_high_noise_window_stays_positive() {
        // d² is a covariance determinant, so even strong noise at high ω_c
        // keeps it positive; a dense scan confirms no bracketed change.
        let w = positivity_window(&ForceField::magnetic(10.0), &unit(), 50.0, 10.0, 20_001).unwrap();
        assert!(w.sign_change.is_none());
        assert!(w.samples.iter().all(|s| s.d2 > 0.0));
    }

    #[test]
    fn bisection_locates_a_synthetic_root() {
        let w = scan_sign_change(|t| 1.0 - t * t / 2.0, 3.0, 7).unwrap();
        let root = w.sign_change.unwrap();
        assert!((root - 2f64.sqrt()).abs() <= 1e-10 * root);
        assert!(scan_sign_change(|t| t, 1.0, 1).is_err());
    }

    #[test]
    fn heisenberg_examples() {
        let i = heisenberg_initial(&QuantumScale::new(1.0, 1.0, 1.0).unwrap());
        assert_relative_eq!(i.a * i.a, 0.5, max_relative = 1e-15);
        assert_relative_eq!(i.b * i.b, 0.5, max_relative = 1e-15);
        let i = heisenberg_initial(&QuantumScale::new(1.0, 1.0, 2.0).unwrap());
        assert_relative_eq!(i.a * i.a, 0.25, max_relative = 1e-15);
        assert_relative_eq!(i.b * i.b, 1.0, max_relative = 1e-15);
        let s = QuantumScale::new(0.3, 2.5, 1.7).unwrap();
        let i = heisenberg_initial(&s);
        assert_relative_eq!(i.a * i.a * i.b * i.b, (s.hbar / (2.0 * s.m)).powi(2), max_relative = 1e-14);
        assert_relative_eq!(i.a * s.m * i.b, s.hbar / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn coherent_density_peak_and_period() {
        let s = QuantumScale::new(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(coherent_density(2.0 * 0.4f64.cos(), 0.4, &s, 2.0), 0.564_190, epsilon = 1e-6);
        let s = QuantumScale::new(1.0, 2.0, 3.0).unwrap();
        let period = 2.0 * PI / s.omega;
        for &x in &[-1.0, 0.0, 0.4, 1.3] {
            assert_relative_eq!(
                coherent_density(x, period, &s, 0.7),
                coherent_density(x, 0.0, &s, 0.7),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn gaussian_identity_for_log_gradient() {
        // Independent route: differentiate s = exp(-R²/4e) by hand.
        for &e in &[0.3, 1.0, 8.0 / 3.0] {
            for &r in &[-2.0, -0.1, 0.0, 0.9, 3.3] {
                let s2_over_s = r * r / (4.0 * e * e) - 1.0 / (2.0 * e);
                assert!((s2_over_s - gaussian_sqrt_laplacian_ratio(r, e)).abs() < 1e-12);
                let lhs = gaussian_log_gradient(r, e);
                let rhs = -2.0 * e * gaussian_qp_term(r, e);
                assert!((lhs - rhs).abs() < 1e-12);
                assert!((lhs + r / e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fluctuation_dissipation_consistency() {
        let p = NoiseParams::from_friction(2.0, 0.5).unwrap();
        assert_eq!(p.q, 2.0);
        assert!(NoiseParams::new(2.0 * (1.0 + 1e-9), 2.0, 0.5).is_err());
        assert!(NoiseParams::new(-1.0, 0.0, 0.0).is_err());
        assert!(NoiseParams::frictionless(3.0).is_ok());
    }

    #[test]
    fn invalid_initial_widths() {
        assert!(InitialGaussian::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(InitialGaussian::new(0.0, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn magnetic_mean_preserves_speed() {
        let init = InitialGaussian::new(0.0, 1.5, 1.0, 1.0).unwrap();
        for &t in &[0.0, 0.3, 2.0, 7.1] {
            let m = phase_mean(&ForceField::magnetic(1.3), t, &init).unwrap();
            assert_relative_eq!(m.u[0].hypot(m.u[1]), 1.5, max_relative = 1e-14);
        }
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        proptest! {
            #[test]
            fn free_determinant_equals_d2(
                t in 0.0f64..20.0, a in 0.05f64..5.0, b in 0.05f64..5.0, q in 1e-6f64..10.0,
            ) {
                let init = InitialGaussian::centered(a, b).unwrap();
                let det = covariance_entries_free(t, &init, q).unwrap().determinant();
                let d2 = d2_coefficient(&ForceField::free(), t, &init, q).unwrap();
                prop_assert!((det - d2).abs() <= 1e-12 * d2);
            }

            #[test]
            fn conditional_variance_is_non_negative(
                t in 0.0f64..10.0, a in 0.05f64..5.0, b in 0.05f64..5.0, q in 0.0f64..10.0, w in 0.0f64..5.0,
            ) {
                let init = InitialGaussian::centered(a, b).unwrap();
                for sys in [ForceField::harmonic(w), ForceField::magnetic(w)] {
                    let c = phase_covariance(&sys, t, &init, q).unwrap();
                    prop_assert!(c.conditional_variance() >= -1e-12 * c.g);
                }
            }
        }
    }
}
