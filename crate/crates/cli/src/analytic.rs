use std::path::Path;

use phasekin::analytic::{coherent_density, d2_coefficient, phase_covariance, positivity_window};
use phasekin::hydro::{
    continuity_residual, fields_from_analytic, fit_quantum_coefficient, momentum_residual, momentum_residual_damped,
    pressure_identity_residual, FieldTriplet, Grid1D, HydroField, Residual, SignConvention,
};
use phasekin::kinetics::{propagate_gaussian, ForceKind, Regime};
use phasekin::regimes::{rescaling_factor, smoluchowski_momentum_residual, smoluchowski_q, SmoluchowskiContext, Variant};
use serde_json::{json, Value};

use crate::common::grid_at;
use crate::config::{RegimeKind, ScenarioConfig, SystemKind};
use crate::error::CliError;
use crate::output::{num, time_tag, OutputDir};
use crate::plots;

/// Tolerance on the coherent-state density comparison.
pub const COHERENT_TOLERANCE: f64 = 1e-10;

struct CovarianceRow {
    t: f64,
    e: f64,
    g: f64,
    h: f64,
    k: Option<f64>,
    d2: f64,
}

fn covariance_row(config: &ScenarioConfig, t: f64) -> Result<CovarianceRow, CliError> {
    let (init, force, regime) = (config.initial(), config.force(), config.regime_model());
    match regime {
        Regime::Frictionless { q } => {
            let c = phase_covariance(&force, t, &init, q)?;
            Ok(CovarianceRow {
                t,
                e: c.e,
                g: c.g,
                h: c.h,
                k: c.k,
                d2: d2_coefficient(&force, t, &init, q)?,
            })
        }
        Regime::Kramers { .. } => {
            let st = propagate_gaussian(&init, &force, &regime, t)?;
            let c = &st.covariance;
            let n = c.nrows() / 2;
            let (e, g, h) = (c[(0, 0)], c[(n, n)], c[(0, n)]);
            let k = (n == 2).then(|| c[(1, n)]);
            Ok(CovarianceRow {
                t,
                e,
                g,
                h,
                k,
                d2: e * g - h * h - k.unwrap_or(0.0).powi(2),
            })
        }
        Regime::Smoluchowski { diffusion_d, .. } => {
            let e = if config.system == SystemKind::Magnetic {
                init.a * init.a + 2.0 * diffusion_d * t
            } else {
                propagate_gaussian(&init, &force, &regime, t)?.covariance[(0, 0)]
            };
            Ok(CovarianceRow {
                t,
                e,
                g: f64::NAN,
                h: f64::NAN,
                k: None,
                d2: f64::NAN,
            })
        }
    }
}

fn write_covariance(out: &mut OutputDir, rows: &[CovarianceRow], overdamped: bool, planar: bool) -> std::io::Result<()> {
    out.text("covariance.csv", |w| {
        if overdamped {
            writeln!(w, "t,e")?;
            for r in rows {
                writeln!(w, "{},{}", r.t, r.e)?;
            }
        } else if planar {
            writeln!(w, "t,e,g,h,k,d2")?;
            for r in rows {
                writeln!(w, "{},{},{},{},{},{}", r.t, r.e, r.g, r.h, r.k.unwrap_or(0.0), r.d2)?;
            }
        } else {
            writeln!(w, "t,e,g,h,d2")?;
            for r in rows {
                writeln!(w, "{},{},{},{},{}", r.t, r.e, r.g, r.h, r.d2)?;
            }
        }
        Ok(())
    })
}

pub(crate) fn write_fields(out: &mut OutputDir, name: &str, f: &HydroField) -> std::io::Result<()> {
    out.text(name, |w| f.write_csv(w))
}

pub(crate) fn write_residual(out: &mut OutputDir, name: &str, r: &Residual) -> std::io::Result<()> {
    out.text(name, |w| r.write_csv(w))
}

fn analytic_triplet(config: &ScenarioConfig, t: f64, grid: &Grid1D) -> Result<[HydroField; 3], CliError> {
    let (init, force, regime) = (config.initial(), config.force(), config.regime_model());
    let d = config.numerics.fd_delta;
    let mut out = Vec::with_capacity(3);
    for s in [t - d, t, t + d] {
        out.push(fields_from_analytic(s, &init, &force, &regime, grid)?);
    }
    Ok(out.try_into().expect("three fields"))
}

fn coherent_applies(config: &ScenarioConfig) -> bool {
    let p = &config.physics;
    p.heisenberg
        && config.system == SystemKind::Harmonic
        && config.regime == RegimeKind::Frictionless
        && p.q == 0.0
        && p.u_ini == 0.0
}

/// Closed-form run: covariance table, fields, residuals, fits and summary.
pub fn run_analytic(config: &ScenarioConfig, out_dir: &Path) -> Result<Value, CliError> {
    let mut out = OutputDir::create(out_dir, config)?;
    let force = config.force();
    let regime = config.regime_model();
    let overdamped = config.regime == RegimeKind::Smoluchowski;
    let planar = config.system == SystemKind::Magnetic;

    let rows = config
        .numerics
        .t_grid
        .iter()
        .map(|&t| covariance_row(config, t))
        .collect::<Result<Vec<_>, _>>()?;
    write_covariance(&mut out, &rows, overdamped, planar)?;

    let mut sign_change = Value::Null;
    if let Regime::Frictionless { q } = regime {
        let t_max = *config.numerics.t_grid.last().expect("validated non-empty");
        let window = positivity_window(&force, &config.initial(), q, t_max, config.numerics.window_steps)?;
        out.text("d2_window.csv", |w| {
            writeln!(w, "t,d2,positive")?;
            for s in &window.samples {
                writeln!(w, "{},{},{}", s.t, s.d2, u8::from(s.positive))?;
            }
            Ok(())
        })?;
        sign_change = window.sign_change.map_or(Value::Null, num);
    }

    let mut times = Vec::new();
    let mut coherent_worst = 0.0f64;
    let mut rescaling = Value::Null;
    let mut maxima = [0.0f64; 3];
    let mut last_sign = Value::Null;

    for row in &rows {
        let t = row.t;
        let tag = time_tag(t);
        let mut entry = json!({
            "t": t,
            "covariance": {"e": num(row.e), "g": num(row.g), "h": num(row.h), "k": row.k.map_or(Value::Null, num), "d2": num(row.d2)},
        });

        if planar {
            if overdamped {
                let p = &config.physics;
                let ctx = SmoluchowskiContext::new(p.beta, p.diffusion_d, phasekin::kinetics::ForceField::free())?;
                let grid = match (config.numerics.grid.x_min, config.numerics.grid.x_max) {
                    (Some(lo), Some(hi)) => Grid1D::new(lo, hi, config.numerics.grid.cells)?,
                    _ => Grid1D::centered(
                        p.x_ini,
                        config.numerics.grid.sigmas.unwrap_or(crate::config::DEFAULT_SIGMAS) * row.e.sqrt(),
                        config.numerics.grid.cells,
                    )?,
                };
                let norm = 1.0 / (2.0 * std::f64::consts::PI * row.e).sqrt();
                let rho: Vec<f64> = grid
                    .centers()
                    .iter()
                    .map(|x| norm * (-(x - p.x_ini).powi(2) / (2.0 * row.e)).exp())
                    .collect();
                let plain = smoluchowski_q(&rho, &grid, &ctx, None)?;
                let scaled = smoluchowski_q(&rho, &grid, &ctx, Some(p.omega_c))?;
                out.text(&format!("q_potential_{tag}.csv"), |w| {
                    writeln!(w, "x,rho,q,q_rescaled,mask")?;
                    for i in 0..grid.n_cells {
                        writeln!(
                            w,
                            "{},{},{},{},{}",
                            grid.center(i),
                            rho[i],
                            plain.q_potential[i],
                            scaled.q_potential[i],
                            u8::from(plain.mask[i])
                        )?;
                    }
                    Ok(())
                })?;
                rescaling = num(rescaling_factor(p.beta, p.omega_c));
            }
            times.push(entry);
            continue;
        }

        let grid = grid_at(config, t)?;
        let f = analytic_triplet(config, t, &grid)?;
        let tr = FieldTriplet::new(&f[0], &f[1], &f[2])?;
        write_fields(&mut out, &format!("fields_{tag}.csv"), &f[1])?;

        let continuity = continuity_residual(&tr)?;
        write_residual(&mut out, &format!("residual_continuity_{tag}.csv"), &continuity)?;

        let momentum = match regime {
            Regime::Frictionless { .. } => momentum_residual(&tr, &force, row.d2, SignConvention::Plus)?,
            Regime::Kramers { beta, .. } => momentum_residual_damped(&tr, &force, beta, row.d2, SignConvention::Plus)?,
            Regime::Smoluchowski { diffusion_d, beta } => {
                let ctx = SmoluchowskiContext::new(beta, diffusion_d, force)?;
                smoluchowski_momentum_residual(&tr, &ctx, Variant::Standard)?
            }
        }
        .density_weighted(&f[1].rho);
        write_residual(&mut out, &format!("residual_momentum_{tag}.csv"), &momentum)?;

        let identity = if overdamped {
            None
        } else {
            let r = pressure_identity_residual(&f[1], row.d2).density_weighted(&f[1].rho);
            write_residual(&mut out, &format!("residual_identity_{tag}.csv"), &r)?;
            Some(r.max_abs())
        };

        let fit = match (regime, force.kind) {
            (Regime::Frictionless { .. }, _) | (Regime::Smoluchowski { .. }, ForceKind::Free) => {
                match fit_quantum_coefficient(&tr, &force) {
                    Ok(fit) => {
                        last_sign = json!(fit.sign);
                        json!({"coefficient": num(fit.coefficient), "sign": fit.sign, "residual_norm": num(fit.residual_norm), "cells": fit.cells})
                    }
                    Err(phasekin::Error::DegenerateRegressor(_)) => Value::Null,
                    Err(e) => return Err(e.into()),
                }
            }
            _ => Value::Null,
        };

        if coherent_applies(config) {
            let scale = config.quantum_scale().expect("heisenberg");
            for field in &f {
                for (i, x) in grid.centers().into_iter().enumerate() {
                    let exact = coherent_density(x, field.t, &scale, config.physics.x_ini);
                    coherent_worst = coherent_worst.max((field.rho[i] - exact).abs());
                }
            }
        }

        maxima[0] = maxima[0].max(continuity.max_abs());
        maxima[1] = maxima[1].max(momentum.max_abs());
        maxima[2] = maxima[2].max(identity.unwrap_or(0.0));
        let obj = entry.as_object_mut().expect("object");
        obj.insert("max_continuity".into(), num(continuity.max_abs()));
        obj.insert("max_momentum".into(), num(momentum.max_abs()));
        obj.insert("max_identity".into(), identity.map_or(Value::Null, num));
        obj.insert("fit".into(), fit);
        obj.insert("coverage_mass".into(), num(f[1].mass()));
        times.push(entry);
    }

    let coherent_match = if coherent_applies(config) {
        json!(coherent_worst <= COHERENT_TOLERANCE)
    } else {
        Value::Null
    };
    let summary = json!({
        "command": "analytic",
        "config_hash": config.hash(),
        "seed": config.seed(),
        "system": config.system,
        "regime": config.regime,
        "times": times,
        "max_residuals": if planar { Value::Null } else {
            json!({"continuity": num(maxima[0]), "momentum": num(maxima[1]), "identity": if overdamped { Value::Null } else { num(maxima[2]) }})
        },
        "fitted_sign": last_sign,
        "coherent_match": coherent_match,
        "coherent_max_error": if coherent_applies(config) { num(coherent_worst) } else { Value::Null },
        "sign_change": sign_change,
        "rescaling_factor": rescaling,
    });
    if config.outputs.plots {
        plots::write_analytic_scripts(&mut out, config)?;
    }
    out.json("summary.json", &summary)?;
    Ok(summary)
}
