use std::io::{self, Write};

use serde::Serialize;

use super::grid::Grid1D;
use super::stencil::{quantum_potential_term, RELATIVE_DENSITY_CUTOFF};
use crate::analytic::{phase_covariance, phase_mean, InitialGaussian};
use crate::error::Result;
use crate::kinetics::{propagate_gaussian, Ensemble, ForceField, ForceKind, Regime};
use crate::Error;

/// Cells with fewer samples are excluded from residuals.
pub const MIN_COUNT: u64 = 5;
/// Fraction of samples that must land on the grid before the coverage
/// warning is raised.
pub const COVERAGE: f64 = 0.99;

/// Hydrodynamic moments on a grid at one time.
///
/// `mask[i] == true` excludes cell `i` from residuals and fits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HydroField {
    pub t: f64,
    pub grid: Grid1D,
    pub rho: Vec<f64>,
    /// `⟨u⟩ₓ`
    pub v: Vec<f64>,
    /// `⟨u²⟩ₓ − ⟨u⟩ₓ²`
    pub var_u: Vec<f64>,
    /// `var_u·ρ`
    pub p_kin: Vec<f64>,
    /// `∇[Δρ^½/ρ^½]`
    pub qp_term: Vec<f64>,
    pub counts: Option<Vec<u64>>,
    pub mask: Vec<bool>,
    pub coverage_warning: bool,
}

/// Histogram estimates of `ρ`, `⟨u⟩ₓ` and the unbiased conditional variance.
pub fn estimate_fields(ensemble: &Ensemble, grid: &Grid1D) -> Result<HydroField> {
    grid.validate()?;
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if ensemble.n_dim != 1 {
        return Err(Error::DimensionMismatch(
            "hydrodynamic fields are one-dimensional".into(),
        ));
    }
    let n = grid.n_cells;
    let mut counts = vec![0u64; n];
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for p in &ensemble.samples {
        if let Some(i) = grid.locate(p.x[0]) {
            counts[i] += 1;
            sum[i] += p.u[0];
        }
    }
    let mean: Vec<f64> = (0..n)
        .map(|i| if counts[i] > 0 { sum[i] / counts[i] as f64 } else { 0.0 })
        .collect();
    for p in &ensemble.samples {
        if let Some(i) = grid.locate(p.x[0]) {
            let d = p.u[0] - mean[i];
            sum_sq[i] += d * d;
        }
    }
    let total = ensemble.len() as f64;
    let h = grid.spacing();
    let rho: Vec<f64> = counts.iter().map(|&c| c as f64 / (total * h)).collect();
    let var_u: Vec<f64> = (0..n)
        .map(|i| if counts[i] >= 2 { sum_sq[i] / (counts[i] - 1) as f64 } else { 0.0 })
        .collect();
    let p_kin = var_u.iter().zip(&rho).map(|(s, r)| s * r).collect();
    let qp = quantum_potential_term(&rho, h, 1.0)?;
    let mask = (0..n).map(|i| counts[i] < MIN_COUNT || qp.mask[i]).collect();
    let on_grid = counts.iter().sum::<u64>() as f64;
    Ok(HydroField {
        t: ensemble.t,
        grid: *grid,
        rho,
        v: mean,
        var_u,
        p_kin,
        qp_term: qp.qp_term,
        counts: Some(counts),
        mask,
        coverage_warning: on_grid < COVERAGE * total,
    })
}

/// Gaussian moments of the position marginal and of the velocity
/// conditioned on position: `ρ = N(x; mean_x, var_x)`,
/// `⟨u⟩ₓ = v0 + slope·(x − mean_x) + drift(x)`.
struct LinearGaussianField {
    mean_x: f64,
    var_x: f64,
    v0: f64,
    slope: f64,
    var_u: f64,
}

fn linear_gaussian(t: f64, init: &InitialGaussian, force: &ForceField, regime: &Regime) -> Result<LinearGaussianField> {
    if let ForceKind::Magnetic { .. } = force.kind {
        return Err(Error::Unsupported(
            "hydrodynamic fields are one-dimensional; the magnetic system is planar".into(),
        ));
    }
    match *regime {
        Regime::Frictionless { q } => {
            let cov = phase_covariance(force, t, init, q)?;
            let mean = phase_mean(force, t, init)?;
            Ok(LinearGaussianField {
                mean_x: mean.x[0],
                var_x: cov.e,
                v0: mean.u[0],
                slope: cov.h / cov.e,
                var_u: cov.conditional_variance(),
            })
        }
        Regime::Kramers { .. } => {
            let state = propagate_gaussian(init, force, regime, t)?;
            let (e, h, g) = (state.covariance[(0, 0)], state.covariance[(0, 1)], state.covariance[(1, 1)]);
            Ok(LinearGaussianField {
                mean_x: state.mean[0],
                var_x: e,
                v0: state.mean[1],
                slope: h / e,
                var_u: g - h * h / e,
            })
        }
        Regime::Smoluchowski { diffusion_d, .. } => {
            let state = propagate_gaussian(init, force, regime, t)?;
            let var_x = state.covariance[(0, 0)];
            Ok(LinearGaussianField {
                mean_x: state.mean[0],
                var_x,
                v0: 0.0,
                slope: diffusion_d / var_x,
                var_u: f64::NAN,
            })
        }
    }
}

/// Closed-form fields at the cell centers.
///
/// In the overdamped regime `v` is the current velocity
/// `F/(mβ) − D∂ₓρ/ρ` and the velocity variance and pressure are `NaN`.
pub fn fields_from_analytic(
    t: f64,
    init: &InitialGaussian,
    force: &ForceField,
    regime: &Regime,
    grid: &Grid1D,
) -> Result<HydroField> {
    grid.validate()?;
    init.validate()?;
    regime.validate()?;
    let lg = linear_gaussian(t, init, force, regime)?;
    let beta = regime.friction();
    let overdamped = !regime.is_phase_space();
    let x = grid.centers();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * lg.var_x).sqrt();
    let rho: Vec<f64> = x
        .iter()
        .map(|&x| {
            let r = x - lg.mean_x;
            norm * (-r * r / (2.0 * lg.var_x)).exp()
        })
        .collect();
    let v = x
        .iter()
        .map(|&x| {
            let drift = if overdamped { force.acceleration(x)? / beta } else { 0.0 };
            Ok(lg.v0 + lg.slope * (x - lg.mean_x) + drift)
        })
        .collect::<Result<Vec<f64>>>()?;
    let var_u = vec![lg.var_u; grid.n_cells];
    let p_kin = rho.iter().map(|r| r * lg.var_u).collect();
    let qp = quantum_potential_term(&rho, grid.spacing(), 1.0)?;
    let cutoff = RELATIVE_DENSITY_CUTOFF * rho.iter().cloned().fold(0.0, f64::max);
    let mask = (0..grid.n_cells).map(|i| qp.mask[i] || rho[i] < cutoff).collect();
    Ok(HydroField {
        t,
        grid: *grid,
        rho,
        v,
        var_u,
        p_kin,
        qp_term: qp.qp_term,
        counts: None,
        mask,
        coverage_warning: false,
    })
}

impl HydroField {
    /// `∫ρ dx` by the midpoint rule.
    pub fn mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.grid.spacing()
    }

    pub const CSV_HEADER: &'static str = "x,rho,v,var_u,p_kin,qp_term,mask";

    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for i in 0..self.grid.n_cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.grid.center(i),
                self.rho[i],
                self.v[i],
                self.var_u[i],
                self.p_kin[i],
                self.qp_term[i],
                u8::from(self.mask[i])
            )?;
        }
        Ok(())
    }
}
