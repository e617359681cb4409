use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::fields::HydroField;
use super::grid::Grid1D;
use crate::error::Result;
use crate::kinetics::ForceField;
use crate::Error;

/// Fields at `t − δ`, `t`, `t + δ` on one grid.
#[derive(Debug, Clone, Copy)]
pub struct FieldTriplet<'a> {
    pub before: &'a HydroField,
    pub at: &'a HydroField,
    pub after: &'a HydroField,
}

impl<'a> FieldTriplet<'a> {
    pub fn new(before: &'a HydroField, at: &'a HydroField, after: &'a HydroField) -> Result<Self> {
        if before.grid != at.grid || after.grid != at.grid {
            return Err(Error::Misaligned("snapshots live on different grids".into()));
        }
        let (d1, d2) = (at.t - before.t, after.t - at.t);
        if !(d1 > 0.0 && d2 > 0.0) || (d1 - d2).abs() > 1e-9 * d1.max(d2) {
            return Err(Error::Misaligned(format!(
                "need t − δ, t, t + δ with uniform δ, got {}, {}, {}",
                before.t, at.t, after.t
            )));
        }
        Ok(Self { before, at, after })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.at.grid
    }

    pub fn delta(&self) -> f64 {
        0.5 * (self.after.t - self.before.t)
    }

    /// Cells where a centered space-time stencil touches no masked input.
    fn stencil_mask(&self) -> Vec<bool> {
        let n = self.grid().n_cells;
        (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    return true;
                }
                (i - 1..=i + 1).any(|j| self.at.mask[j]) || self.before.mask[i] || self.after.mask[i]
            })
            .collect()
    }

    fn dt(&self, f: impl Fn(&HydroField) -> &[f64], i: usize) -> f64 {
        (f(self.after)[i] - f(self.before)[i]) / (2.0 * self.delta())
    }

    /// `(∂ₜ + v∂ₓ)v` at an interior cell.
    fn convective_acceleration(&self, i: usize) -> f64 {
        let h = self.grid().spacing();
        let v = &self.at.v;
        self.dt(|f| &f.v, i) + v[i] * (v[i + 1] - v[i - 1]) / (2.0 * h)
    }
}

/// Per-cell residual. Masked cells hold `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub stat_error: Option<Vec<f64>>,
    pub mask: Vec<bool>,
}

impl Residual {
    fn build(grid: &Grid1D, mask: Vec<bool>, value: impl Fn(usize) -> f64) -> Self {
        let values = (0..grid.n_cells)
            .map(|i| if mask[i] { f64::NAN } else { value(i) })
            .collect();
        Self {
            x: grid.centers(),
            values,
            stat_error: None,
            mask,
        }
    }

    /// Largest magnitude over unmasked cells (0 when everything is masked).
    pub fn max_abs(&self) -> f64 {
        self.unmasked().map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }

    pub fn rms(&self) -> f64 {
        let (n, s) = self.unmasked().fold((0usize, 0.0), |(n, s), (_, v)| (n + 1, s + v * v));
        if n == 0 {
            0.0
        } else {
            (s / n as f64).sqrt()
        }
    }

    pub fn unmasked(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(move |(i, _)| !self.mask[*i])
            .map(|(i, &v)| (i, v))
    }

    /// Multiplies by `ρ`, turning a velocity-form residual into the
    /// corresponding momentum-density form.
    pub fn density_weighted(&self, rho: &[f64]) -> Self {
        Self {
            x: self.x.clone(),
            values: self.values.iter().zip(rho).map(|(v, r)| v * r).collect(),
            stat_error: self
                .stat_error
                .as_ref()
                .map(|e| e.iter().zip(rho).map(|(e, r)| e * r).collect()),
            mask: self.mask.clone(),
        }
    }

    pub fn with_stat_error(mut self, err: Vec<f64>) -> Self {
        self.stat_error = Some(err);
        self
    }

    pub const CSV_HEADER: &'static str = "x,residual,stat_error";

    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for i in 0..self.x.len() {
            let err = self.stat_error.as_ref().map_or(f64::NAN, |e| e[i]);
            writeln!(out, "{},{},{}", self.x[i], self.values[i], err)?;
        }
        Ok(())
    }
}

/// Sign in front of `2·coefficient·qp_term` on the force side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    Plus,
    Minus,
}

impl SignConvention {
    fn factor(self) -> f64 {
        match self {
            SignConvention::Plus => 1.0,
            SignConvention::Minus => -1.0,
        }
    }
}

/// `∂ₜρ + ∂ₓ(vρ)`.
///
/// Histogram inputs also get a per-cell error propagated from Poisson
/// counting noise, treating the three snapshots as independent (an upper
/// bound, since they share samples).
pub fn continuity_residual(triplet: &FieldTriplet) -> Result<Residual> {
    let grid = *triplet.grid();
    let h = grid.spacing();
    let at = triplet.at;
    let flux = |i: usize| at.v[i] * at.rho[i];
    let mut res = Residual::build(&grid, triplet.stencil_mask(), |i| {
        triplet.dt(|f| &f.rho, i) + (flux(i + 1) - flux(i - 1)) / (2.0 * h)
    });
    if let (Some(cb), Some(ca), Some(cn)) = (&triplet.before.counts, &at.counts, &triplet.after.counts) {
        let n = grid.n_cells;
        let rho_var = |c: &[u64], i: usize| {
            let total = c.iter().sum::<u64>().max(1) as f64;
            c[i] as f64 / (total * h).powi(2)
        };
        let total_at = ca.iter().sum::<u64>().max(1) as f64;
        let flux_var = |i: usize| ca[i] as f64 * (at.var_u[i] + at.v[i] * at.v[i]) / (total_at * h).powi(2);
        let delta = triplet.delta();
        let err = (0..n)
            .map(|i| {
                if res.mask[i] {
                    return f64::NAN;
                }
                let time = (rho_var(cn, i) + rho_var(cb, i)) / (2.0 * delta).powi(2);
                let space = (flux_var(i + 1) + flux_var(i - 1)) / (2.0 * h).powi(2);
                (time + space).sqrt()
            })
            .collect();
        res.stat_error = Some(err);
    }
    Ok(res)
}

fn conservative_acceleration(force: &ForceField, x: f64) -> Result<f64> {
    if !force.is_conservative() {
        return Err(Error::DimensionMismatch(
            "the Lorentz force needs the planar two-component fields".into(),
        ));
    }
    force.acceleration(x)
}

/// `(∂ₜ + v∂ₓ)v − F/m ∓ 2·coefficient·qp_term`.
pub fn momentum_residual(
    triplet: &FieldTriplet,
    force: &ForceField,
    coefficient: f64,
    sign: SignConvention,
) -> Result<Residual> {
    momentum_residual_damped(triplet, force, 0.0, coefficient, sign)
}

/// Momentum residual with linear friction: the force side gains `−βv`.
pub fn momentum_residual_damped(
    triplet: &FieldTriplet,
    force: &ForceField,
    beta: f64,
    coefficient: f64,
    sign: SignConvention,
) -> Result<Residual> {
    let grid = *triplet.grid();
    let x = grid.centers();
    let accel = x
        .iter()
        .map(|&x| conservative_acceleration(force, x))
        .collect::<Result<Vec<f64>>>()?;
    let at = triplet.at;
    let s = sign.factor();
    Ok(Residual::build(&grid, triplet.stencil_mask(), |i| {
        triplet.convective_acceleration(i) - accel[i] + beta * at.v[i] - s * 2.0 * coefficient * at.qp_term[i]
    }))
}

/// `−(1/ρ)∂ₓP_kin` by centered differences; `NaN` at the edges.
pub fn kinetic_pressure_force(field: &HydroField) -> Vec<f64> {
    let n = field.grid.n_cells;
    let h = field.grid.spacing();
    (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                f64::NAN
            } else {
                -(field.p_kin[i + 1] - field.p_kin[i - 1]) / (2.0 * h * field.rho[i])
            }
        })
        .collect()
}

/// `−(1/ρ)∂ₓP_kin − 2·coefficient·qp_term`, which vanishes for Gaussian
/// fields when `coefficient = eg − h²`.
pub fn pressure_identity_residual(field: &HydroField, coefficient: f64) -> Residual {
    let force = kinetic_pressure_force(field);
    let n = field.grid.n_cells;
    let mask = (0..n)
        .map(|i| i == 0 || i == n - 1 || (i - 1..=i + 1).any(|j| field.mask[j]))
        .collect();
    Residual::build(&field.grid, mask, |i| force[i] - 2.0 * coefficient * field.qp_term[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientFit {
    /// `c` in `(∂ₜ + v∂ₓ)v − F/m = c·qp_term`.
    pub coefficient: f64,
    pub sign: i8,
    /// RMS of the fit residual over the cells used.
    pub residual_norm: f64,
    pub cells: usize,
}

/// Threshold below which the regressor counts as identically zero.
pub const DEGENERATE_QP: f64 = 1e-12;

/// Least-squares fit of `c` over unmasked cells.
pub fn fit_quantum_coefficient(triplet: &FieldTriplet, force: &ForceField) -> Result<CoefficientFit> {
    let grid = *triplet.grid();
    let x = grid.centers();
    let mask = triplet.stencil_mask();
    let mut rows = Vec::new();
    for i in (0..grid.n_cells).filter(|&i| !mask[i]) {
        let lhs = triplet.convective_acceleration(i) - conservative_acceleration(force, x[i])?;
        rows.push((lhs, triplet.at.qp_term[i]));
    }
    let sxx: f64 = rows.iter().map(|(_, q)| q * q).sum();
    if rows.iter().all(|(_, q)| q.abs() < DEGENERATE_QP) {
        return Err(Error::DegenerateRegressor(DEGENERATE_QP));
    }
    let sxy: f64 = rows.iter().map(|(y, q)| y * q).sum();
    let c = sxy / sxx;
    let sse: f64 = rows.iter().map(|(y, q)| (y - c * q).powi(2)).sum();
    Ok(CoefficientFit {
        coefficient: c,
        sign: if c > 0.0 {
            1
        } else if c < 0.0 {
            -1
        } else {
            0
        },
        residual_norm: (sse / rows.len() as f64).sqrt(),
        cells: rows.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::InitialGaussian;
    use crate::hydro::fields_from_analytic;
    use crate::kinetics::Regime;

    fn stationary(n: usize) -> HydroField {
        let grid = Grid1D::new(-3.0, 3.0, n).unwrap();
        let rho: Vec<f64> = grid.centers().iter().map(|x| (-x * x).exp()).collect();
        HydroField {
            t: 0.0,
            grid,
            p_kin: rho.clone(),
            rho,
            v: vec![0.0; n],
            var_u: vec![1.0; n],
            qp_term: vec![0.0; n],
            counts: None,
            mask: vec![false; n],
            coverage_warning: false,
        }
    }

    #[test]
    fn stationary_state_has_zero_continuity_residual() {
        let f = stationary(32);
        let (mut a, mut b) = (f.clone(), f.clone());
        a.t = -0.1;
        b.t = 0.1;
        let r = continuity_residual(&FieldTriplet::new(&a, &f, &b).unwrap()).unwrap();
        assert_eq!(r.max_abs(), 0.0);
        assert!(r.mask[0] && r.mask[31] && !r.mask[1]);
    }

    #[test]
    fn triplet_validation() {
        let f = stationary(16);
        let mut a = f.clone();
        a.t = -0.1;
        let mut b = f.clone();
        b.t = 0.2;
        assert!(matches!(FieldTriplet::new(&a, &f, &b), Err(Error::Misaligned(_))));
        let mut c = stationary(32);
        c.t = 0.1;
        assert!(matches!(FieldTriplet::new(&a, &f, &c), Err(Error::Misaligned(_))));
    }

    #[test]
    fn synthetic_zero_coefficient_fits_zero() {
        let mut f = stationary(32);
        f.qp_term = f.grid.centers();
        let (mut a, mut b) = (f.clone(), f.clone());
        a.t = -0.1;
        b.t = 0.1;
        let fit = fit_quantum_coefficient(&FieldTriplet::new(&a, &f, &b).unwrap(), &ForceField::free()).unwrap();
        assert_eq!(fit.coefficient, 0.0);
        assert_eq!(fit.sign, 0);
        let flat = stationary(32);
        let r = fit_quantum_coefficient(&FieldTriplet::new(&a, &flat, &b).unwrap(), &ForceField::free());
        assert!(matches!(r, Err(Error::DegenerateRegressor(_))));
        let r = momentum_residual(&FieldTriplet::new(&a, &flat, &b).unwrap(), &ForceField::magnetic(1.0), 1.0, SignConvention::Plus);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn sign_conventions_differ_by_four_coefficient_qp() {
        let init = InitialGaussian::centered(1.0, 1.0).unwrap();
        let grid = Grid1D::centered(0.0, 8.0 * (8.0f64 / 3.0).sqrt(), 512).unwrap();
        let regime = Regime::Frictionless { q: 1.0 };
        let force = ForceField::free();
        let fs: Vec<HydroField> = [1.0 - 1e-3, 1.0, 1.0 + 1e-3]
            .iter()
            .map(|&t| fields_from_analytic(t, &init, &force, &regime, &grid).unwrap())
            .collect();
        let tr = FieldTriplet::new(&fs[0], &fs[1], &fs[2]).unwrap();
        let plus = momentum_residual(&tr, &force, 4.0, SignConvention::Plus).unwrap();
        let minus = momentum_residual(&tr, &force, 4.0, SignConvention::Minus).unwrap();
        for (i, p) in plus.unmasked() {
            let expected = 16.0 * fs[1].qp_term[i];
            assert!((minus.values[i] - p - expected).abs() < 1e-9 * expected.abs().max(1.0));
        }
        assert!(minus.max_abs() > 1e3 * plus.density_weighted(&fs[1].rho).max_abs());
    }
}
