use phasekin::hydro::Grid1D;
use phasekin::kinetics::propagate_gaussian;

use crate::config::{ScenarioConfig, DEFAULT_SIGMAS};
use crate::error::CliError;

/// Mean and variance of the position marginal at `t`.
pub fn position_moments(config: &ScenarioConfig, t: f64) -> Result<(f64, f64), CliError> {
    let st = propagate_gaussian(&config.initial(), &config.force(), &config.regime_model(), t)?;
    Ok((st.mean[0], st.covariance[(0, 0)]))
}

/// Report grid at time `t`: explicit bounds, or `sigmas` position standard
/// deviations around the mean.
pub fn grid_at(config: &ScenarioConfig, t: f64) -> Result<Grid1D, CliError> {
    let spec = &config.numerics.grid;
    if let (Some(lo), Some(hi)) = (spec.x_min, spec.x_max) {
        return Ok(Grid1D::new(lo, hi, spec.cells)?);
    }
    let (mean, var) = position_moments(config, t)?;
    let sigmas = spec.sigmas.unwrap_or(DEFAULT_SIGMAS);
    Ok(Grid1D::centered(mean, sigmas * var.sqrt(), spec.cells)?)
}
