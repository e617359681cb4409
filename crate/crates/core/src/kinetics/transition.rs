use nalgebra::{DMatrix, DVector};

use super::model::{ForceField, ForceKind, Regime};
use crate::analytic::{self, InitialGaussian};
use crate::error::{check_time, Result};
use crate::linalg::{psd_factor, van_loan};
use crate::Error;

/// Layout of the state vector advanced by a linear transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateLayout {
    /// `(x, u)`
    Phase1,
    /// `(x, y, u, w)`
    Phase2,
    /// `(x)`, overdamped
    Config1,
}

impl StateLayout {
    pub fn of(force: &ForceField, regime: &Regime) -> Result<Self> {
        match (force.n_dim(), regime.is_phase_space()) {
            (1, true) => Ok(Self::Phase1),
            (2, true) => Ok(Self::Phase2),
            (1, false) => Ok(Self::Config1),
            _ => Err(Error::Unsupported(
                "no overdamped magnetic process is simulated; only the rescaled Q is available".into(),
            )),
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Self::Phase1 => 2,
            Self::Phase2 => 4,
            Self::Config1 => 1,
        }
    }
}

/// Exact Gaussian transition `X(t+dt) = Φ X(t) + ξ`, `ξ ~ N(0, covariance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub layout: StateLayout,
    pub flow: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
    /// `L` with `L Lᵀ = covariance`.
    pub factor: DMatrix<f64>,
}

impl Transition {
    fn new(layout: StateLayout, flow: DMatrix<f64>, covariance: DMatrix<f64>) -> Self {
        let factor = psd_factor(&covariance);
        Self {
            layout,
            flow,
            covariance,
            factor,
        }
    }

    /// Composition: `self` then `next`.
    pub fn then(&self, next: &Transition) -> Transition {
        let flow = &next.flow * &self.flow;
        let covariance = &next.flow * &self.covariance * next.flow.transpose() + &next.covariance;
        Transition::new(self.layout, flow, covariance)
    }
}

/// Drift matrix `A` and noise intensity matrix `G` of the linear SDE
/// `dX = A X dt + dW`, `⟨dW dWᵀ⟩ = G dt`.
pub fn linear_sde(force: &ForceField, regime: &Regime) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    force.validate()?;
    regime.validate()?;
    let layout = StateLayout::of(force, regime)?;
    let n = layout.dim();
    let mut drift = DMatrix::zeros(n, n);
    let mut noise = DMatrix::zeros(n, n);
    match *regime {
        Regime::Frictionless { q } | Regime::Kramers { q, .. } => {
            let beta = regime.friction();
            let half = n / 2;
            for i in 0..half {
                drift[(i, half + i)] = 1.0;
                drift[(half + i, half + i)] = -beta;
                noise[(half + i, half + i)] = 2.0 * q;
            }
            match force.kind {
                ForceKind::Free => {}
                ForceKind::Harmonic { omega } => drift[(1, 0)] = -omega * omega,
                ForceKind::Magnetic { omega_c } => {
                    // du = ω_c w dt, dw = −ω_c u dt
                    drift[(2, 3)] = omega_c;
                    drift[(3, 2)] = -omega_c;
                }
            }
        }
        Regime::Smoluchowski { diffusion_d, beta } => {
            drift[(0, 0)] = force.acceleration_gradient()? / beta;
            noise[(0, 0)] = 2.0 * diffusion_d;
        }
    }
    Ok((drift, noise))
}

/// Exact transition over `dt` via the block matrix exponential. Used as the
/// reference route for the closed forms in [`transition`].
pub fn transition_van_loan(force: &ForceField, regime: &Regime, dt: f64) -> Result<Transition> {
    check_time(dt)?;
    let layout = StateLayout::of(force, regime)?;
    let (drift, noise) = linear_sde(force, regime)?;
    let (flow, cov) = van_loan(&drift, &noise, dt);
    Ok(Transition::new(layout, flow, cov))
}

/// Exact transition over `dt`: closed-form flow maps and noise covariances
/// for the frictionless and overdamped systems, matrix exponential for the
/// Kramers cases.
pub fn transition(force: &ForceField, regime: &Regime, dt: f64) -> Result<Transition> {
    check_time(dt)?;
    force.validate()?;
    regime.validate()?;
    let layout = StateLayout::of(force, regime)?;
    match *regime {
        Regime::Kramers { .. } => transition_van_loan(force, regime, dt),
        Regime::Frictionless { q } => {
            let cov = analytic::point_source_covariance(force, dt, q)?;
            match force.kind {
                ForceKind::Free | ForceKind::Harmonic { .. } => {
                    let omega = match force.kind {
                        ForceKind::Harmonic { omega } => omega,
                        _ => 0.0,
                    };
                    let x = omega * dt;
                    let (s, c) = x.sin_cos();
                    let flow = DMatrix::from_row_slice(2, 2, &[c, dt * sinc(x), -omega * s, c]);
                    let covariance = DMatrix::from_row_slice(2, 2, &[cov.e, cov.h, cov.h, cov.g]);
                    Ok(Transition::new(layout, flow, covariance))
                }
                ForceKind::Magnetic { omega_c } => {
                    let x = omega_c * dt;
                    let (s, c) = x.sin_cos();
                    let along = dt * sinc(x);
                    let across = dt * x * 0.5 * sinc(0.5 * x).powi(2);
                    #[rustfmt::skip]
                    let flow = DMatrix::from_row_slice(4, 4, &[
                        1.0, 0.0, along, across,
                        0.0, 1.0, -across, along,
                        0.0, 0.0, c, s,
                        0.0, 0.0, -s, c,
                    ]);
                    let k = cov.k.unwrap_or(0.0);
                    #[rustfmt::skip]
                    let covariance = DMatrix::from_row_slice(4, 4, &[
                        cov.e, 0.0, cov.h, -k,
                        0.0, cov.e, k, cov.h,
                        cov.h, k, cov.g, 0.0,
                        -k, cov.h, 0.0, cov.g,
                    ]);
                    Ok(Transition::new(layout, flow, covariance))
                }
            }
        }
        Regime::Smoluchowski { diffusion_d, beta } => {
            // Ornstein–Uhlenbeck with relaxation rate κ = ω²/β.
            let kappa = -force.acceleration_gradient()? / beta;
            let (flow, var) = if kappa > 0.0 {
                ((-kappa * dt).exp(), -diffusion_d * (-2.0 * kappa * dt).exp_m1() / kappa)
            } else {
                (1.0, 2.0 * diffusion_d * dt)
            };
            Ok(Transition::new(
                layout,
                DMatrix::from_element(1, 1, flow),
                DMatrix::from_element(1, 1, var),
            ))
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Mean and covariance of the state vector at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub layout: StateLayout,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianState {
    /// Initial state: independent Gaussians per coordinate; the planar case
    /// puts the initial mean on the first axis.
    pub fn initial(init: &InitialGaussian, layout: StateLayout) -> Self {
        let (a2, b2) = (init.a * init.a, init.b * init.b);
        let (mean, diag) = match layout {
            StateLayout::Phase1 => (vec![init.x_ini, init.u_ini], vec![a2, b2]),
            StateLayout::Phase2 => (vec![init.x_ini, 0.0, init.u_ini, 0.0], vec![a2, a2, b2, b2]),
            StateLayout::Config1 => (vec![init.x_ini], vec![a2]),
        };
        Self {
            layout,
            mean: DVector::from_vec(mean),
            covariance: DMatrix::from_diagonal(&DVector::from_vec(diag)),
        }
    }

    pub fn advanced(&self, tr: &Transition) -> Self {
        Self {
            layout: self.layout,
            mean: &tr.flow * &self.mean,
            covariance: &tr.flow * &self.covariance * tr.flow.transpose() + &tr.covariance,
        }
    }
}

/// Exact linear propagation of the factorized initial Gaussian to time `t`.
pub fn propagate_gaussian(init: &InitialGaussian, force: &ForceField, regime: &Regime, t: f64) -> Result<GaussianState> {
    init.validate()?;
    let layout = StateLayout::of(force, regime)?;
    let tr = transition(force, regime, t)?;
    Ok(GaussianState::initial(init, layout).advanced(&tr))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn closed_forms_match_matrix_exponential() {
        let cases = [
            (ForceField::free(), Regime::Frictionless { q: 0.7 }),
            (ForceField::harmonic(1.3), Regime::Frictionless { q: 0.4 }),
            (ForceField::harmonic(0.0), Regime::Frictionless { q: 1.0 }),
            (ForceField::magnetic(2.1), Regime::Frictionless { q: 0.9 }),
            (ForceField::magnetic(1e-5), Regime::Frictionless { q: 0.9 }),
            (ForceField::free(), Regime::Smoluchowski { diffusion_d: 0.6, beta: 3.0 }),
            (ForceField::harmonic(1.5), Regime::Smoluchowski { diffusion_d: 0.6, beta: 3.0 }),
        ];
        for (force, regime) in cases {
            for &dt in &[1e-3, 0.25, 1.0, 3.0] {
                let closed = transition(&force, &regime, dt).unwrap();
                let reference = transition_van_loan(&force, &regime, dt).unwrap();
                let scale = reference.covariance.amax().max(1e-300);
                assert!(max_abs_diff(&closed.flow, &reference.flow) < 1e-10, "{force:?} {regime:?} dt={dt}");
                assert!(
                    max_abs_diff(&closed.covariance, &reference.covariance) < 1e-9 * scale + 1e-15,
                    "{force:?} {regime:?} dt={dt}: {} vs {}",
                    closed.covariance,
                    reference.covariance
                );
            }
        }
    }

    #[test]
    fn free_frictionless_step_covariance() {
        let tr = transition(&ForceField::free(), &Regime::Frictionless { q: 2.0 }, 0.5).unwrap();
        let dt: f64 = 0.5;
        assert!((tr.covariance[(0, 0)] - 2.0 / 3.0 * 2.0 * dt.powi(3)).abs() < 1e-15);
        assert!((tr.covariance[(0, 1)] - 2.0 * dt * dt).abs() < 1e-15);
        assert!((tr.covariance[(1, 1)] - 2.0 * 2.0 * dt).abs() < 1e-15);
    }

    #[test]
    fn two_half_steps_equal_one_step() {
        let cases = [
            (ForceField::free(), Regime::Frictionless { q: 1.0 }),
            (ForceField::harmonic(2.0), Regime::Frictionless { q: 0.3 }),
            (ForceField::magnetic(1.7), Regime::Frictionless { q: 0.5 }),
            (ForceField::harmonic(1.0), Regime::Kramers { q: 0.5, beta: 0.8 }),
            (ForceField::magnetic(1.0), Regime::Kramers { q: 0.5, beta: 0.8 }),
            (ForceField::harmonic(1.0), Regime::Smoluchowski { diffusion_d: 0.5, beta: 2.0 }),
        ];
        for (force, regime) in cases {
            let dt = 0.8;
            let half = transition(&force, &regime, dt / 2.0).unwrap();
            let two = half.then(&half);
            let one = transition(&force, &regime, dt).unwrap();
            for (x, y) in two.covariance.iter().zip(one.covariance.iter()) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-3), "{force:?} {regime:?}");
            }
            assert!(max_abs_diff(&two.flow, &one.flow) < 1e-13);
        }
    }

    #[test]
    fn propagation_reproduces_analytic_covariance() {
        let init = InitialGaussian::new(0.3, -0.2, 0.9, 1.1).unwrap();
        for force in [ForceField::free(), ForceField::harmonic(1.4), ForceField::magnetic(0.8)] {
            let st = propagate_gaussian(&init, &force, &Regime::Frictionless { q: 0.6 }, 1.7).unwrap();
            let c = analytic::phase_covariance(&force, 1.7, &init, 0.6).unwrap();
            let m = analytic::phase_mean(&force, 1.7, &init).unwrap();
            let half = st.layout.dim() / 2;
            assert!((st.covariance[(0, 0)] - c.e).abs() < 1e-12);
            assert!((st.covariance[(half, half)] - c.g).abs() < 1e-12);
            assert!((st.covariance[(0, half)] - c.h).abs() < 1e-12);
            if let Some(k) = c.k {
                assert!((st.covariance[(1, 2)] - k).abs() < 1e-12);
            }
            assert!((st.mean[0] - m.x[0]).abs() < 1e-12);
            assert!((st.mean[half] - m.u[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn kramers_velocity_relaxes_to_equipartition() {
        let init = InitialGaussian::centered(1.0, 3.0).unwrap();
        let st = propagate_gaussian(&init, &ForceField::free(), &Regime::Kramers { q: 2.0, beta: 4.0 }, 20.0).unwrap();
        assert!((st.covariance[(1, 1)] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn overdamped_magnetic_is_rejected() {
        let err = transition(&ForceField::magnetic(1.0), &Regime::Smoluchowski { diffusion_d: 1.0, beta: 1.0 }, 1.0);
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }
}
