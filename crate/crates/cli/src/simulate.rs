use std::path::Path;

use phasekin::analytic::d2_coefficient;
use phasekin::hydro::{
    bootstrap_covariance_errors, bootstrap_residual_errors, continuity_residual, estimate_fields, fields_from_analytic,
    momentum_residual, momentum_residual_damped, FieldTriplet, Grid1D, HydroField, Residual, SignConvention,
};
use phasekin::kinetics::{propagate_gaussian, simulate, Ensemble, Regime, Scenario, StateLayout};
use phasekin::regimes::{smoluchowski_field, smoluchowski_momentum_residual, SmoluchowskiContext, Variant};
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::analytic::{write_fields, write_residual};
use crate::common::grid_at;
use crate::config::{RegimeKind, ScenarioConfig, SnapshotFormat, SystemKind};
use crate::error::CliError;
use crate::output::{num, time_tag, OutputDir};
use crate::plots;

/// Bootstrap standard errors allowed between sample and exact covariance.
pub const COVARIANCE_SIGMAS: f64 = 3.0;
/// Family-wise level of the per-cell continuity check, in two-sided
/// normal standard deviations; the per-cell limit is Bonferroni-corrected.
pub const CONTINUITY_SIGMAS: f64 = 3.0;

/// Per-cell `|z|` limit keeping the chance of any of `cells` exceeding it at
/// the two-sided `CONTINUITY_SIGMAS` level.
pub fn continuity_limit(cells: usize) -> f64 {
    let unit = Normal::standard();
    let family = 2.0 * unit.sf(CONTINUITY_SIGMAS);
    unit.inverse_cdf(1.0 - family / (2.0 * cells.max(1) as f64))
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured <= tolerance,
            measured,
            tolerance,
        }
    }
}

/// Simulation times: 0, then `t − δ, t, t + δ` around each report time of a
/// one-dimensional run (just `t` for the planar system).
fn simulation_times(config: &ScenarioConfig) -> Vec<f64> {
    let d = config.numerics.fd_delta;
    let mut times = vec![0.0];
    for &t in &config.numerics.t_grid {
        if config.system == SystemKind::Magnetic {
            times.push(t);
        } else {
            times.extend([t - d, t, t + d]);
        }
    }
    times
}

fn index_of(times: &[f64], t: f64) -> usize {
    times.iter().position(|&s| s == t).expect("time is on the simulation grid")
}

/// Overdamped samples carry the drift velocity, so the hydrodynamic `v` is
/// rebuilt as the current velocity from the histogram density.
fn to_current_velocity(f: &HydroField, ctx: &SmoluchowskiContext) -> Result<HydroField, phasekin::Error> {
    let mut out = smoluchowski_field(f.t, f.rho.clone(), &f.grid, ctx)?;
    for (m, &own) in out.mask.iter_mut().zip(&f.mask) {
        *m |= own;
    }
    out.counts = f.counts.clone();
    out.coverage_warning = f.coverage_warning;
    Ok(out)
}

struct Residuals<'a> {
    config: &'a ScenarioConfig,
    d2: f64,
}

impl Residuals<'_> {
    fn ctx(&self) -> Option<SmoluchowskiContext> {
        match self.config.regime_model() {
            Regime::Smoluchowski { diffusion_d, beta } => SmoluchowskiContext::new(beta, diffusion_d, self.config.force()).ok(),
            _ => None,
        }
    }

    fn prepared(&self, tr: &FieldTriplet) -> Result<Option<[HydroField; 3]>, phasekin::Error> {
        match self.ctx() {
            Some(ctx) => Ok(Some([
                to_current_velocity(tr.before, &ctx)?,
                to_current_velocity(tr.at, &ctx)?,
                to_current_velocity(tr.after, &ctx)?,
            ])),
            None => Ok(None),
        }
    }

    fn continuity(&self, tr: &FieldTriplet) -> Result<Residual, phasekin::Error> {
        match self.prepared(tr)? {
            Some(f) => continuity_residual(&FieldTriplet::new(&f[0], &f[1], &f[2])?),
            None => continuity_residual(tr),
        }
    }

    /// Momentum-density form `ρ·r`.
    fn momentum(&self, tr: &FieldTriplet) -> Result<Residual, phasekin::Error> {
        let force = self.config.force();
        let r = match self.config.regime_model() {
            Regime::Frictionless { .. } => momentum_residual(tr, &force, self.d2, SignConvention::Plus)?,
            Regime::Kramers { beta, .. } => momentum_residual_damped(tr, &force, beta, self.d2, SignConvention::Plus)?,
            Regime::Smoluchowski { .. } => {
                let f = self.prepared(tr)?.expect("overdamped");
                let ctx = self.ctx().expect("overdamped");
                smoluchowski_momentum_residual(&FieldTriplet::new(&f[0], &f[1], &f[2])?, &ctx, Variant::Standard)?
            }
        };
        Ok(r.density_weighted(&tr.at.rho))
    }
}

fn coefficient_at(config: &ScenarioConfig, t: f64) -> Result<f64, CliError> {
    let (init, force, regime) = (config.initial(), config.force(), config.regime_model());
    Ok(match regime {
        Regime::Frictionless { q } => d2_coefficient(&force, t, &init, q)?,
        Regime::Kramers { .. } => {
            let c = propagate_gaussian(&init, &force, &regime, t)?.covariance;
            c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(0, 1)]
        }
        Regime::Smoluchowski { .. } => f64::NAN,
    })
}

fn covariance_checks(config: &ScenarioConfig, snap: &Ensemble, k: u64, checks: &mut Vec<Check>) -> Result<Value, CliError> {
    let (init, force, regime) = (config.initial(), config.force(), config.regime_model());
    let st = propagate_gaussian(&init, &force, &regime, snap.t)?;
    let c = &st.covariance;
    let m = snap.phase_moments()?;
    let se = bootstrap_covariance_errors(snap, config.numerics.bootstrap_resamples, config.seed() ^ (k << 32))?;
    let entries: Vec<(&str, f64, f64, f64)> = match st.layout {
        StateLayout::Phase1 => vec![
            ("e", m.var_x, c[(0, 0)], se[0]),
            ("h", m.cov_xu, c[(0, 1)], se[1]),
            ("g", m.var_u, c[(1, 1)], se[2]),
        ],
        StateLayout::Phase2 => vec![
            ("e", m.var_x, c[(0, 0)], se[0]),
            ("h", m.cov_xu, c[(0, 2)], se[1]),
            ("g", m.var_u, c[(2, 2)], se[2]),
        ],
        StateLayout::Config1 => vec![("e", m.var_x, c[(0, 0)], se[0])],
    };
    let tag = time_tag(snap.t);
    let mut table = serde_json::Map::new();
    for (name, sample, exact, err) in entries {
        let z = (sample - exact).abs() / err;
        checks.push(Check::at_most(format!("covariance_{name}_{tag}"), z, COVARIANCE_SIGMAS));
        table.insert(name.into(), json!({"sample": num(sample), "exact": num(exact), "bootstrap_se": num(err)}));
    }
    Ok(Value::Object(table))
}

/// L1 distance between a density on `grid` and the overdamped heat-kernel
/// density with `D = q/β²`.
fn smoluchowski_gap(config: &ScenarioConfig, rho: &[f64], grid: &Grid1D, t: f64) -> Result<f64, CliError> {
    let p = &config.physics;
    let regime = Regime::Smoluchowski {
        diffusion_d: p.q / (p.beta * p.beta),
        beta: p.beta,
    };
    let f = fields_from_analytic(t, &config.initial(), &config.force(), &regime, grid)?;
    Ok(rho.iter().zip(&f.rho).map(|(a, b)| (a - b).abs()).sum::<f64>() * grid.spacing())
}

/// Monte Carlo run: snapshots, estimated fields, residuals with bootstrap
/// errors, and PASS/FAIL checks against the exact Gaussian moments.
pub fn run_simulate(config: &ScenarioConfig, out_dir: &Path) -> Result<Value, CliError> {
    config.validate_for_simulation()?;
    let mut out = OutputDir::create(out_dir, config)?;
    let times = simulation_times(config);
    let scenario = Scenario {
        init: config.initial(),
        force: config.force(),
        regime: config.regime_model(),
        t_grid: times.clone(),
        n_samples: config.numerics.n_samples,
        seed: config.seed(),
        integrator: config.integrator(),
    };
    let snaps = simulate(&scenario)?;

    match config.outputs.snapshots {
        SnapshotFormat::Long => out.text("snapshots.csv", |w| {
            writeln!(w, "{}", snaps[0].snapshot_header())?;
            for s in &snaps {
                s.write_snapshot_rows(w)?;
            }
            Ok(())
        })?,
        SnapshotFormat::PerTime => {
            for s in &snaps {
                out.text(&format!("snapshot_{}.csv", time_tag(s.t)), |w| {
                    writeln!(w, "{}", s.snapshot_header())?;
                    s.write_snapshot_rows(w)
                })?;
            }
        }
        SnapshotFormat::None => {}
    }

    let mut checks = Vec::new();
    let mut per_time = Vec::new();
    let resamples = config.numerics.bootstrap_resamples;
    for (k, &t) in config.numerics.t_grid.iter().enumerate() {
        let tag = time_tag(t);
        let i = index_of(&times, t);
        let covariance = covariance_checks(config, &snaps[i], k as u64, &mut checks)?;
        let mut entry = json!({"t": t, "covariance": covariance});
        if config.system == SystemKind::Magnetic {
            per_time.push(entry);
            continue;
        }

        let grid = grid_at(config, t)?;
        let d = config.numerics.fd_delta;
        let trio = [&snaps[index_of(&times, t - d)], &snaps[i], &snaps[index_of(&times, t + d)]];
        let fields = trio
            .iter()
            .map(|s| estimate_fields(s, &grid))
            .collect::<Result<Vec<_>, _>>()?;
        let tr = FieldTriplet::new(&fields[0], &fields[1], &fields[2])?;
        write_fields(&mut out, &format!("fields_{tag}.csv"), &fields[1])?;

        let res = Residuals {
            config,
            d2: coefficient_at(config, t)?,
        };
        let seed = config.seed() ^ 0x5eed ^ ((k as u64) << 40);
        let continuity = res.continuity(&tr)?;
        let continuity_se = bootstrap_residual_errors(trio, &grid, resamples, seed, |tr| res.continuity(tr))?;
        let reference = match &continuity.stat_error {
            Some(err) if continuity.unmasked().all(|(j, _)| err[j].is_finite()) => err,
            _ => &continuity_se,
        };
        let worst_z = continuity
            .unmasked()
            .map(|(j, v)| v.abs() / reference[j])
            .fold(0.0, |acc: f64, z| if z.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(z) });
        let limit = continuity_limit(continuity.unmasked().count());
        checks.push(Check::at_most(format!("continuity_{tag}"), worst_z, limit));
        write_residual(&mut out, &format!("residual_continuity_{tag}.csv"), &continuity.clone().with_stat_error(continuity_se))?;

        let momentum = res.momentum(&tr)?;
        let momentum_se = bootstrap_residual_errors(trio, &grid, resamples, seed ^ 1, |tr| res.momentum(tr))?;
        write_residual(&mut out, &format!("residual_momentum_{tag}.csv"), &momentum.clone().with_stat_error(momentum_se))?;

        let obj = entry.as_object_mut().expect("object");
        obj.insert("max_continuity".into(), num(continuity.max_abs()));
        obj.insert("rms_continuity".into(), num(continuity.rms()));
        obj.insert("max_momentum".into(), num(momentum.max_abs()));
        obj.insert("rms_momentum".into(), num(momentum.rms()));
        obj.insert("coverage_warning".into(), json!(fields[1].coverage_warning));
        if config.regime == RegimeKind::Kramers && config.physics.beta > 0.0 {
            let exact = fields_from_analytic(t, &config.initial(), &config.force(), &config.regime_model(), &grid)?;
            obj.insert(
                "smoluchowski_discrepancy".into(),
                json!({
                    "monte_carlo": num(smoluchowski_gap(config, &fields[1].rho, &grid, t)?),
                    "analytic": num(smoluchowski_gap(config, &exact.rho, &grid, t)?),
                }),
            );
        }
        per_time.push(entry);
    }

    let failed = checks.iter().filter(|c| !c.passed).count();
    let summary = json!({
        "command": "simulate",
        "config_hash": config.hash(),
        "seed": config.seed(),
        "system": config.system,
        "regime": config.regime,
        "n_samples": config.numerics.n_samples,
        "times": per_time,
        "checks": checks,
        "status": if failed == 0 { "PASS" } else { "FAIL" },
    });
    if config.outputs.plots {
        plots::write_simulation_scripts(&mut out, config)?;
    }
    out.json("summary.json", &summary)?;
    Ok(summary)
}

/// Number of failed checks recorded in a summary.
pub fn failures(summary: &Value) -> usize {
    summary["checks"]
        .as_array()
        .map_or(0, |c| c.iter().filter(|c| c["passed"] == json!(false)).count())
}
