use std::f64::consts::PI;

use phasekin::analytic::{
    coherent_density, d2_coefficient, heisenberg_initial, phase_covariance, phase_mean, InitialGaussian, QuantumScale,
};
use phasekin::hydro::{
    continuity_residual, fields_from_analytic, fit_quantum_coefficient, momentum_residual, pressure_identity_residual,
    quantum_potential_term, FieldTriplet, Grid1D, HydroField, SignConvention,
};
use phasekin::kinetics::{collision_moments, simulate, DensityMoments, ForceField, Integrator, Regime, Scenario};
use phasekin::regimes::{omega_potential, rescaling_factor, smoluchowski_momentum_residual, SmoluchowskiContext, Variant};

use crate::error::CliError;
use crate::simulate::Check;

/// Hook for the free-particle `d²(t)` used by the checks, so a perturbed
/// coefficient can be injected.
#[derive(Clone, Copy)]
pub struct Shim {
    pub d2_free: fn(f64, &InitialGaussian, f64) -> f64,
}

fn library_d2_free(t: f64, init: &InitialGaussian, q: f64) -> f64 {
    d2_coefficient(&ForceField::free(), t, init, q).expect("valid inputs")
}

impl Default for Shim {
    fn default() -> Self {
        Self { d2_free: library_d2_free }
    }
}

const FD_DELTA: f64 = 1e-3;
const FD_TOLERANCE: f64 = 1e-4;

fn unit() -> InitialGaussian {
    InitialGaussian::centered(1.0, 1.0).expect("valid")
}

fn triplet(t: f64, init: &InitialGaussian, force: &ForceField, regime: &Regime, cells: usize) -> Result<[HydroField; 3], CliError> {
    let st = phasekin::kinetics::propagate_gaussian(init, force, regime, t)?;
    let grid = Grid1D::centered(st.mean[0], 8.0 * st.covariance[(0, 0)].sqrt(), cells)?;
    let mut v = Vec::new();
    for s in [t - FD_DELTA, t, t + FD_DELTA] {
        v.push(fields_from_analytic(s, init, force, regime, &grid)?);
    }
    Ok(v.try_into().expect("three"))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Frictionless free residuals at one resolution: continuity, momentum
/// (density weighted) and the pressure identity (density weighted).
fn free_residuals(cells: usize, shim: &Shim) -> Result<[f64; 3], CliError> {
    let (force, regime) = (ForceField::free(), Regime::Frictionless { q: 1.0 });
    let f = triplet(1.0, &unit(), &force, &regime, cells)?;
    let tr = FieldTriplet::new(&f[0], &f[1], &f[2])?;
    let d2 = (shim.d2_free)(1.0, &unit(), 1.0);
    Ok([
        continuity_residual(&tr)?.max_abs(),
        momentum_residual(&tr, &force, d2, SignConvention::Plus)?.density_weighted(&f[1].rho).max_abs(),
        pressure_identity_residual(&f[1], d2).density_weighted(&f[1].rho).max_abs(),
    ])
}

fn heat_kernel_residual(cells: usize) -> Result<f64, CliError> {
    let force = ForceField::free();
    let regime = Regime::Smoluchowski { diffusion_d: 1.0, beta: 1.0 };
    let f = triplet(1.0, &unit(), &force, &regime, cells)?;
    let tr = FieldTriplet::new(&f[0], &f[1], &f[2])?;
    let ctx = SmoluchowskiContext::new(1.0, 1.0, force)?;
    Ok(smoluchowski_momentum_residual(&tr, &ctx, Variant::Standard)?.density_weighted(&f[1].rho).max_abs())
}

/// Runs every invariant check and returns the results in a fixed order.
pub fn run_checks(shim: &Shim) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    let init = unit();

    let c = phase_covariance(&ForceField::free(), 1.0, &init, 1.0)?;
    let worst = [rel(c.e, 8.0 / 3.0), rel(c.g, 3.0), rel(c.h, 2.0), rel((shim.d2_free)(1.0, &init, 1.0), 4.0)]
        .into_iter()
        .fold(0.0, f64::max);
    checks.push(Check::at_most("free_covariance_t1", worst, 1e-12));

    for (name, force) in [
        ("limit_identity_magnetic", ForceField::magnetic(1e-4)),
        ("limit_identity_harmonic", ForceField::harmonic(1e-4)),
    ] {
        let mut worst = 0.0f64;
        for t in [0.1, 1.0, 5.0] {
            let free = (shim.d2_free)(t, &init, 1.0);
            worst = worst.max(rel(d2_coefficient(&force, t, &init, 1.0)?, free));
        }
        checks.push(Check::at_most(name, worst, 1e-6));
    }

    let scale = QuantumScale::new(1.0, 1.0, 1.0)?;
    let coherent = heisenberg_initial(&scale).with_center(1.0, 0.0);
    let force = ForceField::harmonic(1.0);
    let (mut sup, mut width) = (0.0f64, 0.0f64);
    for k in 0..50 {
        let t = 2.0 * PI * k as f64 / 49.0;
        let cov = phase_covariance(&force, t, &coherent, 0.0)?;
        let mean = phase_mean(&force, t, &coherent)?;
        width = width.max((cov.e.sqrt() - coherent.a).abs());
        for j in 0..201 {
            let x = -6.0 + 12.0 * j as f64 / 200.0;
            let r = x - mean.x[0];
            let rho = (-r * r / (2.0 * cov.e)).exp() / (2.0 * PI * cov.e).sqrt();
            sup = sup.max((rho - coherent_density(x, t, &scale, 1.0)).abs());
        }
    }
    checks.push(Check::at_most("coherent_state_sup_norm", sup, 1e-10));
    checks.push(Check::at_most("coherent_state_width", width, 1e-10));

    let (force, regime) = (ForceField::free(), Regime::Frictionless { q: 1.0 });
    let f = triplet(1.0, &init, &force, &regime, 512)?;
    let plus = fit_quantum_coefficient(&FieldTriplet::new(&f[0], &f[1], &f[2])?, &force)?;
    let expected = 2.0 * (shim.d2_free)(1.0, &init, 1.0);
    checks.push(Check::at_most("fit_frictionless_plus_8", rel(plus.coefficient, expected), 5e-3));
    let regime = Regime::Smoluchowski { diffusion_d: 1.0, beta: 1.0 };
    let f = triplet(1.0, &init, &force, &regime, 512)?;
    let minus = fit_quantum_coefficient(&FieldTriplet::new(&f[0], &f[1], &f[2])?, &force)?;
    checks.push(Check::at_most("fit_smoluchowski_minus_2", rel(minus.coefficient, -2.0), 5e-3));
    checks.push(Check {
        name: format!("sign_dichotomy (fitted {:+.4} vs {:+.4})", plus.coefficient, minus.coefficient),
        passed: plus.sign == 1 && minus.sign == -1,
        measured: plus.coefficient * minus.coefficient,
        tolerance: 0.0,
    });

    let coarse = free_residuals(512, shim)?;
    let fine = free_residuals(1024, shim)?;
    for (k, name) in ["continuity", "momentum", "pressure_identity"].iter().enumerate() {
        checks.push(Check::at_most(format!("{name}_residual_512"), coarse[k], FD_TOLERANCE));
        checks.push(Check {
            name: format!("{name}_refinement_ratio"),
            passed: coarse[k] / fine[k] >= 3.0,
            measured: coarse[k] / fine[k],
            tolerance: 3.0,
        });
    }
    let (hc, hf) = (heat_kernel_residual(512)?, heat_kernel_residual(1024)?);
    checks.push(Check::at_most("smoluchowski_momentum_residual_512", hc, FD_TOLERANCE));
    checks.push(Check {
        name: "smoluchowski_refinement_ratio".into(),
        passed: hc / hf >= 3.0,
        measured: hc / hf,
        tolerance: 3.0,
    });

    let (rho, v, var, q, beta) = (0.8, 0.3, 1.1, 0.7, 1.9);
    let free = collision_moments(&DensityMoments { rho, v, second_moment: var + v * v }, &Regime::Frictionless { q })?;
    checks.push(Check::at_most("collision_frictionless_m0_m1", free.m0.abs() + free.m1.abs(), 0.0));
    let k = collision_moments(&DensityMoments { rho, v, second_moment: var + v * v }, &Regime::Kramers { q, beta })?;
    checks.push(Check::at_most("collision_kramers_m1", (k.m1 + beta * rho * v).abs(), 1e-12));
    let stat = collision_moments(&DensityMoments { rho, v: 0.0, second_moment: q / beta }, &Regime::Kramers { q, beta })?;
    checks.push(Check::at_most("collision_kramers_m2_stationary", stat.m2.abs(), 1e-12));
    let cold = collision_moments(&DensityMoments { rho, v, second_moment: var + v * v }, &Regime::Kramers { q, beta: 0.0 })?;
    checks.push(Check::at_most("collision_kramers_m2_no_friction", (cold.m2 - 2.0 * q * rho).abs(), 1e-12));

    checks.push(Check::at_most("rescaling_half_at_omega_c_beta", (rescaling_factor(1.7, 1.7) - 0.5).abs(), 0.0));
    let ctx = SmoluchowskiContext::new(1.0, 1.0, ForceField::harmonic(1.0))?;
    checks.push(Check::at_most("omega_harmonic_unit", (omega_potential(1.0, &ctx)? + 0.5).abs(), 1e-15));

    let grid = Grid1D::centered(0.0, 8.0, 801)?;
    let rho: Vec<f64> = grid.centers().iter().map(|x| (-x * x / 2.0).exp() / (2.0 * PI).sqrt()).collect();
    let qp = quantum_potential_term(&rho, grid.spacing(), 1.0)?;
    checks.push(Check::at_most("gaussian_q_at_peak", (qp.q_potential[400] + 1.0).abs(), 1e-4));

    let scenario = Scenario {
        init,
        force: ForceField::harmonic(1.3),
        regime: Regime::Kramers { q: 0.5, beta: 0.4 },
        t_grid: vec![0.0, 0.5, 1.0],
        n_samples: 2000,
        seed: 77,
        integrator: Integrator::EulerMaruyama { dt: 0.01 },
    };
    let (a, b) = (simulate(&scenario)?, simulate(&scenario)?);
    checks.push(Check {
        name: "simulation_determinism".into(),
        passed: a == b,
        measured: if a == b { 0.0 } else { 1.0 },
        tolerance: 0.0,
    });
    Ok(checks)
}
