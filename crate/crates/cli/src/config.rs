use std::fs;
use std::path::{Path, PathBuf};

use phasekin::analytic::{heisenberg_initial, InitialGaussian, QuantumScale};
use phasekin::kinetics::{ForceField, Integrator, Regime};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Free,
    Harmonic,
    Magnetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    Frictionless,
    Kramers,
    Smoluchowski,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorKind {
    Exact,
    EulerMaruyama,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotFormat {
    /// One `snapshots.csv` holding every time.
    Long,
    /// One file per snapshot time.
    PerTime,
    None,
}

/// One scenario, read from JSON. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemKind,
    pub regime: RegimeKind,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    pub q: f64,
    pub beta: f64,
    pub diffusion_d: f64,
    pub omega: f64,
    pub omega_c: f64,
    pub m: f64,
    pub hbar: f64,
    pub x_ini: f64,
    pub u_ini: f64,
    /// Derive `a`, `b` from `hbar`, `m`, `omega` (minimum uncertainty).
    pub heisenberg: bool,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            a: None,
            b: None,
            q: 1.0,
            beta: 1.0,
            diffusion_d: 1.0,
            omega: 1.0,
            omega_c: 1.0,
            m: 1.0,
            hbar: 1.0,
            x_ini: 0.0,
            u_ini: 0.0,
            heisenberg: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub n_samples: usize,
    /// Report times, strictly increasing and positive.
    pub t_grid: Vec<f64>,
    /// Euler–Maruyama step.
    pub dt: f64,
    pub grid: GridSpec,
    pub seed: u64,
    pub integrator: IntegratorKind,
    /// Half-width of the centered time differences.
    pub fd_delta: f64,
    pub bootstrap_resamples: usize,
    /// Samples of the `d²(t)` positivity scan.
    pub window_steps: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            t_grid: vec![1.0],
            dt: 0.01,
            grid: GridSpec::default(),
            seed: 0,
            integrator: IntegratorKind::Exact,
            fd_delta: 1e-3,
            bootstrap_resamples: 200,
            window_steps: 2000,
        }
    }
}

/// Either explicit bounds or a half-width in position standard deviations
/// around the mean at each report time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub cells: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            cells: 512,
            sigmas: None,
            x_min: None,
            x_max: None,
        }
    }
}

pub const DEFAULT_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub snapshots: SnapshotFormat,
    pub plots: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            dir: None,
            snapshots: SnapshotFormat::Long,
            plots: true,
        }
    }
}

fn bad(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            bad(if path.is_empty() { "." } else { &path }, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| bad(".", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn seed(&self) -> u64 {
        self.numerics.seed
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.physics;
        let finite = [
            ("physics.q", p.q),
            ("physics.beta", p.beta),
            ("physics.diffusion_d", p.diffusion_d),
            ("physics.omega", p.omega),
            ("physics.omega_c", p.omega_c),
            ("physics.m", p.m),
            ("physics.hbar", p.hbar),
            ("physics.x_ini", p.x_ini),
            ("physics.u_ini", p.u_ini),
        ];
        for (path, v) in finite {
            if !v.is_finite() {
                return Err(bad(path, "must be finite"));
            }
        }
        for (path, v) in [("physics.q", p.q), ("physics.omega", p.omega), ("physics.omega_c", p.omega_c), ("physics.beta", p.beta)] {
            if v < 0.0 {
                return Err(bad(path, format!("must be non-negative, got {v}")));
            }
        }
        if p.m <= 0.0 {
            return Err(bad("physics.m", "must be positive"));
        }
        if p.heisenberg {
            if p.a.is_some() {
                return Err(bad("physics.a", "heisenberg mode derives a from hbar, m, omega; remove the explicit value"));
            }
            if p.b.is_some() {
                return Err(bad("physics.b", "heisenberg mode derives b from hbar, m, omega; remove the explicit value"));
            }
            if p.hbar <= 0.0 {
                return Err(bad("physics.hbar", "must be positive in heisenberg mode"));
            }
            if p.omega <= 0.0 {
                return Err(bad("physics.omega", "must be positive in heisenberg mode"));
            }
        }
        for (path, v) in [("physics.a", p.a), ("physics.b", p.b)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(bad(path, format!("must be positive, got {v}")));
                }
            }
        }
        if self.regime == RegimeKind::Smoluchowski {
            if p.beta <= 0.0 {
                return Err(bad("physics.beta", "the overdamped regime needs beta > 0"));
            }
            if p.diffusion_d <= 0.0 {
                return Err(bad("physics.diffusion_d", "must be positive"));
            }
        }

        let n = &self.numerics;
        if n.t_grid.is_empty() {
            return Err(bad("numerics.t_grid", "must not be empty"));
        }
        for (i, &t) in n.t_grid.iter().enumerate() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(bad(&format!("numerics.t_grid[{i}]"), format!("must be positive, got {t}")));
            }
            if i > 0 && t <= n.t_grid[i - 1] {
                return Err(bad(&format!("numerics.t_grid[{i}]"), "times must be strictly increasing"));
            }
        }
        if !(n.fd_delta > 0.0 && n.fd_delta < n.t_grid[0]) {
            return Err(bad("numerics.fd_delta", "must be positive and below the first report time"));
        }
        if n.t_grid.windows(2).any(|w| w[1] - w[0] <= 2.0 * n.fd_delta) {
            return Err(bad("numerics.fd_delta", "report times must be more than 2·fd_delta apart"));
        }
        if !(n.dt > 0.0 && n.dt.is_finite()) {
            return Err(bad("numerics.dt", "must be positive"));
        }
        if n.grid.cells < phasekin::hydro::MIN_CELLS {
            return Err(bad("numerics.grid.cells", format!("need at least {}", phasekin::hydro::MIN_CELLS)));
        }
        match (n.grid.x_min, n.grid.x_max, n.grid.sigmas) {
            (Some(lo), Some(hi), None) if lo < hi => {}
            (Some(_), Some(_), None) => return Err(bad("numerics.grid.x_max", "must exceed x_min")),
            (None, None, Some(s)) if !(s > 0.0 && s.is_finite()) => {
                return Err(bad("numerics.grid.sigmas", "must be positive"))
            }
            (None, None, _) => {}
            (_, _, Some(_)) => return Err(bad("numerics.grid.sigmas", "give either sigmas or x_min/x_max, not both")),
            _ => return Err(bad("numerics.grid", "x_min and x_max go together")),
        }
        if n.bootstrap_resamples < 2 {
            return Err(bad("numerics.bootstrap_resamples", "need at least 2"));
        }
        if n.window_steps < 2 {
            return Err(bad("numerics.window_steps", "need at least 2"));
        }
        Ok(())
    }

    /// Checks that only apply to Monte Carlo runs.
    pub fn validate_for_simulation(&self) -> Result<(), CliError> {
        if self.regime == RegimeKind::Smoluchowski && self.system == SystemKind::Magnetic {
            return Err(bad("regime", "smoluchowski with the magnetic system is only available in analytic mode"));
        }
        if self.numerics.n_samples < 10 {
            return Err(bad("numerics.n_samples", "need at least 10 samples"));
        }
        Ok(())
    }

    pub fn quantum_scale(&self) -> Option<QuantumScale> {
        let p = &self.physics;
        p.heisenberg.then(|| QuantumScale::new(p.hbar, p.m, p.omega).expect("validated"))
    }

    pub fn initial(&self) -> InitialGaussian {
        let p = &self.physics;
        let base = match self.quantum_scale() {
            Some(scale) => heisenberg_initial(&scale),
            None => InitialGaussian {
                x_ini: 0.0,
                u_ini: 0.0,
                a: p.a.unwrap_or(1.0),
                b: p.b.unwrap_or(1.0),
            },
        };
        base.with_center(p.x_ini, p.u_ini)
    }

    pub fn force(&self) -> ForceField {
        let p = &self.physics;
        let f = match self.system {
            SystemKind::Free => ForceField::free(),
            SystemKind::Harmonic => ForceField::harmonic(p.omega),
            SystemKind::Magnetic => ForceField::magnetic(p.omega_c),
        };
        f.with_mass(p.m)
    }

    pub fn regime_model(&self) -> Regime {
        let p = &self.physics;
        match self.regime {
            RegimeKind::Frictionless => Regime::Frictionless { q: p.q },
            RegimeKind::Kramers => Regime::Kramers { q: p.q, beta: p.beta },
            RegimeKind::Smoluchowski => Regime::Smoluchowski {
                diffusion_d: p.diffusion_d,
                beta: p.beta,
            },
        }
    }

    pub fn integrator(&self) -> Integrator {
        match self.numerics.integrator {
            IntegratorKind::Exact => Integrator::Exact,
            IntegratorKind::EulerMaruyama => Integrator::EulerMaruyama { dt: self.numerics.dt },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ScenarioConfig::from_json(r#"{"system": "free", "regime": "frictionless"}"#).unwrap();
        assert_eq!(c.numerics.grid.cells, 512);
        assert_eq!(c.initial(), InitialGaussian::centered(1.0, 1.0).unwrap());
    }

    #[test]
    fn round_trip_is_identity() {
        let text = r#"{"system": "harmonic", "regime": "kramers",
            "physics": {"a": 0.5, "q": 0.3, "beta": 2.0, "omega": 1.5},
            "numerics": {"t_grid": [0.5, 1.0], "grid": {"cells": 64, "x_min": -3, "x_max": 3}, "seed": 7},
            "outputs": {"snapshots": "per_time", "plots": false}}"#;
        let c = ScenarioConfig::from_json(text).unwrap();
        let again = ScenarioConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn errors_carry_field_paths() {
        let path = |text: &str| match ScenarioConfig::from_json(text) {
            Err(CliError::Config { path, .. }) => path,
            other => panic!("{other:?}"),
        };
        assert_eq!(path(r#"{"system": "free", "regime": "frictionless", "physics": {"qq": 1}}"#), "physics.qq");
        assert_eq!(path(r#"{"system": "free", "regime": "frictionless", "numerics": {"grid": {"cells": "x"}}}"#), "numerics.grid.cells");
        assert_eq!(path(r#"{"system": "rotor", "regime": "frictionless"}"#), "system");
        assert_eq!(
            path(r#"{"system": "harmonic", "regime": "frictionless", "physics": {"heisenberg": true, "a": 1}}"#),
            "physics.a"
        );
        assert_eq!(path(r#"{"system": "free", "regime": "frictionless", "numerics": {"t_grid": [1, 0.5]}}"#), "numerics.t_grid[1]");
    }

    #[test]
    fn heisenberg_widths() {
        let c = ScenarioConfig::from_json(
            r#"{"system": "harmonic", "regime": "frictionless", "physics": {"heisenberg": true, "hbar": 2, "m": 1, "omega": 4}}"#,
        )
        .unwrap();
        let init = c.initial();
        assert!((init.a * init.a - 0.25).abs() < 1e-15);
        assert!((init.b * init.b - 4.0).abs() < 1e-15);
    }

    #[test]
    fn overdamped_magnetic_is_analytic_only() {
        let c = ScenarioConfig::from_json(r#"{"system": "magnetic", "regime": "smoluchowski"}"#).unwrap();
        assert!(c.validate_for_simulation().is_err());
    }
}
