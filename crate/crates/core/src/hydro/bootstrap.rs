use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::fields::{estimate_fields, HydroField};
use super::grid::Grid1D;
use super::residual::{FieldTriplet, Residual};
use crate::error::Result;
use crate::kinetics::Ensemble;
use crate::Error;

pub const DEFAULT_RESAMPLES: usize = 200;

/// Per-component bootstrap standard errors of `stat` over `n` samples.
///
/// `stat` receives resampled indices; non-finite outputs are skipped per
/// component. Resample `r` draws from its own stream of `seed`.
pub fn bootstrap_standard_errors<F>(n: usize, resamples: usize, seed: u64, stat: F) -> Result<Vec<f64>>
where
    F: Fn(&[usize]) -> Result<Vec<f64>> + Sync,
{
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if resamples < 2 {
        return Err(crate::error::invalid("bootstrap_resamples", "need at least two resamples"));
    }
    let draws = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            stat(&idx)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let width = draws[0].len();
    Ok((0..width)
        .map(|k| {
            let vals: Vec<f64> = draws.iter().map(|d| d[k]).filter(|v| v.is_finite()).collect();
            if vals.len() < 2 {
                return f64::NAN;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
        })
        .collect())
}

fn resampled(ens: &Ensemble, idx: &[usize]) -> Ensemble {
    Ensemble {
        samples: idx.iter().map(|&i| ens.samples[i]).collect(),
        t: ens.t,
        master_seed: ens.master_seed,
        n_dim: ens.n_dim,
        step: ens.step,
    }
}

/// Bootstrap error of a residual computed from three ensembles that share
/// sample indices. The same resampled index set is applied to all three
/// snapshots so trajectory correlations are preserved.
pub fn bootstrap_residual_errors<F>(
    snapshots: [&Ensemble; 3],
    grid: &Grid1D,
    resamples: usize,
    seed: u64,
    residual: F,
) -> Result<Vec<f64>>
where
    F: Fn(&FieldTriplet) -> Result<Residual> + Sync,
{
    let n = snapshots[0].len();
    if snapshots.iter().any(|e| e.len() != n) {
        return Err(Error::Misaligned("snapshots hold different sample counts".into()));
    }
    bootstrap_standard_errors(n, resamples, seed, |idx| {
        let fields: Vec<HydroField> = snapshots
            .iter()
            .map(|e| estimate_fields(&resampled(e, idx), grid))
            .collect::<Result<_>>()?;
        let tr = FieldTriplet::new(&fields[0], &fields[1], &fields[2])?;
        Ok(residual(&tr)?.values)
    })
}

/// Bootstrap errors of `(var x, cov xu, var u)` for a one-dimensional
/// ensemble.
pub fn bootstrap_covariance_errors(ensemble: &Ensemble, resamples: usize, seed: u64) -> Result<[f64; 3]> {
    let se = bootstrap_standard_errors(ensemble.len(), resamples, seed, |idx| {
        let m = resampled(ensemble, idx).phase_moments()?;
        Ok(vec![m.var_x, m.cov_xu, m.var_u])
    })?;
    Ok([se[0], se[1], se[2]])
}
