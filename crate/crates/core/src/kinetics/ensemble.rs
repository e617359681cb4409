use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{ForceField, ForceKind, Regime};
use super::noise::SampleNoise;
use super::transition::{transition, StateLayout, Transition};
use crate::analytic::InitialGaussian;
use crate::error::{invalid, Result};
use crate::Error;

const CHUNK: usize = 2048;

/// One phase-space sample. Second components are only used in the planar
/// magnetic case. In the overdamped regime `u` holds the deterministic drift
/// velocity `F/(mβ)` at the sample position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: [f64; 2],
    pub u: [f64; 2],
}

/// Monte Carlo state: `N` samples sharing one timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub samples: Vec<PhasePoint>,
    pub t: f64,
    pub master_seed: u64,
    pub n_dim: usize,
    /// Index of the last noise step consumed; the initial draw is step 0.
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integrator {
    /// Distribution-exact Gaussian transition between grid times.
    Exact,
    /// Explicit Euler–Maruyama with step at most `dt`.
    EulerMaruyama { dt: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub init: InitialGaussian,
    pub force: ForceField,
    pub regime: Regime,
    /// Snapshot times, strictly increasing from 0.
    pub t_grid: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub integrator: Integrator,
}

/// Sample statistics of `(x, u)` for one-dimensional ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseMoments {
    pub mean_x: f64,
    pub mean_u: f64,
    pub var_x: f64,
    pub cov_xu: f64,
    pub var_u: f64,
}

#[derive(Clone, Copy)]
struct Affine {
    dim: usize,
    flow: [[f64; 4]; 4],
    factor: [[f64; 4]; 4],
}

impl Affine {
    fn new(tr: &Transition) -> Self {
        let dim = tr.layout.dim();
        let mut flow = [[0.0; 4]; 4];
        let mut factor = [[0.0; 4]; 4];
        for i in 0..dim {
            for j in 0..dim {
                flow[i][j] = tr.flow[(i, j)];
                factor[i][j] = tr.factor[(i, j)];
            }
        }
        Self { dim, flow, factor }
    }

    fn apply(&self, s: &[f64; 4], z: &[f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for i in 0..self.dim {
            let mut acc = 0.0;
            for j in 0..self.dim {
                acc += self.flow[i][j] * s[j] + self.factor[i][j] * z[j];
            }
            out[i] = acc;
        }
        out
    }
}

/// Everything a sample update needs besides the state and the noise.
#[derive(Clone, Copy)]
struct Dynamics {
    layout: StateLayout,
    force: ForceField,
    regime: Regime,
}

impl Dynamics {
    fn new(force: &ForceField, regime: &Regime) -> Result<Self> {
        force.validate()?;
        regime.validate()?;
        Ok(Self {
            layout: StateLayout::of(force, regime)?,
            force: *force,
            regime: *regime,
        })
    }

    fn load(&self, p: &PhasePoint) -> [f64; 4] {
        match self.layout {
            StateLayout::Phase1 => [p.x[0], p.u[0], 0.0, 0.0],
            StateLayout::Phase2 => [p.x[0], p.x[1], p.u[0], p.u[1]],
            StateLayout::Config1 => [p.x[0], 0.0, 0.0, 0.0],
        }
    }

    fn store(&self, s: &[f64; 4]) -> PhasePoint {
        match self.layout {
            StateLayout::Phase1 => PhasePoint {
                x: [s[0], 0.0],
                u: [s[1], 0.0],
            },
            StateLayout::Phase2 => PhasePoint {
                x: [s[0], s[1]],
                u: [s[2], s[3]],
            },
            StateLayout::Config1 => PhasePoint {
                x: [s[0], 0.0],
                u: [self.drift_velocity(s[0]), 0.0],
            },
        }
    }

    fn drift_velocity(&self, x: f64) -> f64 {
        // Config1 only exists for conservative forces.
        self.force.acceleration(x).unwrap_or(0.0) / self.regime.friction()
    }

    fn initial(&self, init: &InitialGaussian, z: &[f64; 4]) -> [f64; 4] {
        match self.layout {
            StateLayout::Phase1 => [init.x_ini + init.a * z[0], init.u_ini + init.b * z[1], 0.0, 0.0],
            StateLayout::Phase2 => [
                init.x_ini + init.a * z[0],
                init.a * z[1],
                init.u_ini + init.b * z[2],
                init.b * z[3],
            ],
            StateLayout::Config1 => [init.x_ini + init.a * z[0], 0.0, 0.0, 0.0],
        }
    }

    /// Explicit first-order update.
    fn euler_maruyama(&self, s: &[f64; 4], dt: f64, z: &[f64; 4]) -> [f64; 4] {
        let beta = self.regime.friction();
        match (self.layout, self.regime) {
            (StateLayout::Config1, Regime::Smoluchowski { diffusion_d, .. }) => {
                let drift = self.drift_velocity(s[0]);
                [s[0] + drift * dt + (2.0 * diffusion_d * dt).sqrt() * z[0], 0.0, 0.0, 0.0]
            }
            (StateLayout::Phase1, Regime::Frictionless { q } | Regime::Kramers { q, .. }) => {
                let acc = self.force.acceleration(s[0]).unwrap_or(0.0) - beta * s[1];
                [s[0] + s[1] * dt, s[1] + acc * dt + (2.0 * q * dt).sqrt() * z[0], 0.0, 0.0]
            }
            (StateLayout::Phase2, Regime::Frictionless { q } | Regime::Kramers { q, .. }) => {
                let wc = match self.force.kind {
                    ForceKind::Magnetic { omega_c } => omega_c,
                    _ => 0.0,
                };
                let kick = (2.0 * q * dt).sqrt();
                let ax = wc * s[3] - beta * s[2];
                let ay = -wc * s[2] - beta * s[3];
                [
                    s[0] + s[2] * dt,
                    s[1] + s[3] * dt,
                    s[2] + ax * dt + kick * z[0],
                    s[3] + ay * dt + kick * z[1],
                ]
            }
            _ => unreachable!("layout is derived from the regime"),
        }
    }
}

impl Ensemble {
    /// Draws `n` samples from the factorized initial Gaussian.
    pub fn sample_initial(
        init: &InitialGaussian,
        force: &ForceField,
        regime: &Regime,
        n: usize,
        master_seed: u64,
    ) -> Result<Self> {
        init.validate()?;
        if n == 0 {
            return Err(invalid("n_samples", "need at least one sample"));
        }
        let dynamics = Dynamics::new(force, regime)?;
        let samples = (0..n)
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(|i| {
                let z = SampleNoise::new(master_seed, i as u64).normals(0);
                dynamics.store(&dynamics.initial(init, &z))
            })
            .collect();
        Ok(Self {
            samples,
            t: 0.0,
            master_seed,
            n_dim: force.n_dim(),
            step: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Advances every sample by the exact Gaussian transition over `dt`.
    pub fn exact_step(&mut self, force: &ForceField, regime: &Regime, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        let dynamics = self.dynamics_for(force, regime)?;
        let affine = Affine::new(&transition(force, regime, dt)?);
        let (seed, step) = (self.master_seed, self.step + 1);
        self.samples
            .par_iter_mut()
            .with_min_len(CHUNK)
            .enumerate()
            .for_each(|(i, p)| {
                let z = SampleNoise::new(seed, i as u64).normals(step);
                *p = dynamics.store(&affine.apply(&dynamics.load(p), &z));
            });
        self.step = step;
        self.t += dt;
        Ok(())
    }

    /// Advances every sample by one explicit Euler–Maruyama step.
    pub fn em_step(&mut self, force: &ForceField, regime: &Regime, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        let dynamics = self.dynamics_for(force, regime)?;
        let (seed, step) = (self.master_seed, self.step + 1);
        self.samples
            .par_iter_mut()
            .with_min_len(CHUNK)
            .enumerate()
            .for_each(|(i, p)| {
                let z = SampleNoise::new(seed, i as u64).normals(step);
                *p = dynamics.store(&dynamics.euler_maruyama(&dynamics.load(p), dt, &z));
            });
        self.step = step;
        self.t += dt;
        Ok(())
    }

    fn dynamics_for(&self, force: &ForceField, regime: &Regime) -> Result<Dynamics> {
        if self.samples.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if force.n_dim() != self.n_dim {
            return Err(Error::DimensionMismatch(format!(
                "ensemble is {}-D, force needs {}-D",
                self.n_dim,
                force.n_dim()
            )));
        }
        Dynamics::new(force, regime)
    }

    /// Sample mean and covariance of the first position and velocity
    /// components (unbiased normalization).
    pub fn phase_moments(&self) -> Result<PhaseMoments> {
        let n = self.samples.len();
        if n == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let nf = n as f64;
        let mean_x = self.samples.iter().map(|p| p.x[0]).sum::<f64>() / nf;
        let mean_u = self.samples.iter().map(|p| p.u[0]).sum::<f64>() / nf;
        let (mut sxx, mut sxu, mut suu) = (0.0, 0.0, 0.0);
        for p in &self.samples {
            let (dx, du) = (p.x[0] - mean_x, p.u[0] - mean_u);
            sxx += dx * dx;
            sxu += dx * du;
            suu += du * du;
        }
        let denom = (n.max(2) - 1) as f64;
        Ok(PhaseMoments {
            mean_x,
            mean_u,
            var_x: sxx / denom,
            cov_xu: sxu / denom,
            var_u: suu / denom,
        })
    }

    pub fn snapshot_header(&self) -> &'static str {
        if self.n_dim == 2 {
            "t,idx,x,y,u,w"
        } else {
            "t,idx,x,u"
        }
    }

    /// CSV rows `t,idx,x[,y],u[,w]` without the header line.
    pub fn write_snapshot_rows<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        for (i, p) in self.samples.iter().enumerate() {
            if self.n_dim == 2 {
                writeln!(out, "{},{},{},{},{},{}", self.t, i, p.x[0], p.x[1], p.u[0], p.u[1])?;
            } else {
                writeln!(out, "{},{},{},{}", self.t, i, p.x[0], p.u[0])?;
            }
        }
        Ok(())
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.init.validate()?;
        self.force.validate()?;
        self.regime.validate()?;
        StateLayout::of(&self.force, &self.regime)?;
        if self.n_samples == 0 {
            return Err(invalid("n_samples", "need at least one sample"));
        }
        match self.t_grid.first() {
            None => return Err(invalid("t_grid", "must not be empty")),
            Some(&t0) if t0 != 0.0 => return Err(invalid("t_grid", format!("must start at 0, starts at {t0}"))),
            _ => {}
        }
        if self.t_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("t_grid", "must be strictly increasing"));
        }
        if let Integrator::EulerMaruyama { dt } = self.integrator {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(invalid("dt", format!("must be positive, got {dt}")));
            }
        }
        Ok(())
    }
}

/// Step plan between consecutive grid times: `(step size, count)`.
fn plan(scenario: &Scenario) -> Vec<(f64, u64)> {
    scenario
        .t_grid
        .windows(2)
        .map(|w| {
            let span = w[1] - w[0];
            match scenario.integrator {
                Integrator::Exact => (span, 1),
                Integrator::EulerMaruyama { dt } => {
                    let n = ((span / dt) - 1e-9).ceil().max(1.0) as u64;
                    (span / n as f64, n)
                }
            }
        })
        .collect()
}

/// Runs the scenario and returns one ensemble per grid time.
///
/// Samples are processed independently, each consuming its own noise
/// stream, so the output does not depend on how samples are distributed
/// over workers.
pub fn simulate(scenario: &Scenario) -> Result<Vec<Ensemble>> {
    scenario.validate()?;
    let dynamics = Dynamics::new(&scenario.force, &scenario.regime)?;
    let plan = plan(scenario);
    let affines: Vec<Option<Affine>> = plan
        .iter()
        .map(|&(h, _)| match scenario.integrator {
            Integrator::Exact => transition(&scenario.force, &scenario.regime, h).map(|tr| Some(Affine::new(&tr))),
            Integrator::EulerMaruyama { .. } => Ok(None),
        })
        .collect::<Result<_>>()?;
    let n_times = scenario.t_grid.len();
    let seed = scenario.seed;

    let run_sample = |i: usize, out: &mut [Vec<PhasePoint>]| {
        let mut noise = SampleNoise::new(seed, i as u64);
        let mut state = dynamics.initial(&scenario.init, &noise.normals(0));
        out[0].push(dynamics.store(&state));
        let mut step = 0u64;
        for (k, &(h, count)) in plan.iter().enumerate() {
            for _ in 0..count {
                step += 1;
                let z = noise.normals(step);
                state = match &affines[k] {
                    Some(affine) => affine.apply(&state, &z),
                    None => dynamics.euler_maruyama(&state, h, &z),
                };
                if dynamics.layout == StateLayout::Config1 {
                    state = dynamics.load(&dynamics.store(&state));
                }
            }
            out[k + 1].push(dynamics.store(&state));
        }
    };

    let chunks: Vec<Vec<Vec<PhasePoint>>> = (0..scenario.n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(scenario.n_samples);
            let mut out: Vec<Vec<PhasePoint>> = (0..n_times).map(|_| Vec::with_capacity(hi - lo)).collect();
            for i in lo..hi {
                run_sample(i, &mut out);
            }
            out
        })
        .collect();

    let mut steps_so_far = 0u64;
    let mut ensembles = Vec::with_capacity(n_times);
    for (k, &t) in scenario.t_grid.iter().enumerate() {
        if k > 0 {
            steps_so_far += plan[k - 1].1;
        }
        let mut samples = Vec::with_capacity(scenario.n_samples);
        for chunk in &chunks {
            samples.extend_from_slice(&chunk[k]);
        }
        ensembles.push(Ensemble {
            samples,
            t,
            master_seed: seed,
            n_dim: scenario.force.n_dim(),
            step: steps_so_far,
        });
    }
    Ok(ensembles)
}
