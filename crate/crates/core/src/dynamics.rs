//! Noise-driven Schrödinger flow on SU(2).
//!
//! For a fixed noise realisation `U_t` solves a linear ODE, so each path is
//! integrated with classical RK4 in the quaternion coordinates, which are
//! regular everywhere. The noise is sampled exactly at the RK4 stage times
//! `t`, `t + dt/2`, `t + dt`. The quaternion is renormalized after every
//! step. Angles and the transition probability are derived outputs.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{sample_stationary, stream_rng, NoiseParams, NoiseStream, PathRng};
use crate::su2::{angles_to_quaternion, haar_sample, quaternion_to_angles, AngleState, QuaternionState};

/// Largest step accepted by [`SimParams::validate`].
pub const MAX_DT: f64 = 0.1;

/// How `(U_0, Z_0)` is chosen for each path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `U_0 = 1`, `Z_0` stationary.
    #[default]
    Identity,
    /// `U_0` Haar-distributed, `Z_0` stationary.
    Haar,
    /// Given angles; `Z_0` stationary unless `z` is set.
    Angles { chi: f64, phi: f64, psi: f64, z: Option<f64> },
    /// Given quaternion and noise value.
    Fixed { q: [f64; 4], z: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub noise: NoiseParams,
    pub kappa: f64,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    /// Record every `output_stride`-th step (the final step is always kept).
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    #[serde(default)]
    pub initial: InitialCondition,
}

fn default_stride() -> usize {
    1
}

impl SimParams {
    pub fn new(gamma: f64, kappa: f64, sigma: f64, dt: f64, t_final: f64, seed: u64) -> Result<Self> {
        let p = Self {
            noise: NoiseParams::new(gamma, sigma)?,
            kappa,
            dt,
            t_final,
            seed,
            output_stride: 1,
            initial: InitialCondition::Identity,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.output_stride = stride;
        self
    }

    pub fn with_initial(mut self, initial: InitialCondition) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_t_final(mut self, t_final: f64) -> Self {
        self.t_final = t_final;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::Dynamics(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::Dynamics(format!("dt must be in (0, {MAX_DT}], got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.dt) {
            return Err(Error::Dynamics(format!("t_final must be >= dt, got {}", self.t_final)));
        }
        if self.output_stride == 0 {
            return Err(Error::Dynamics("output_stride must be >= 1".into()));
        }
        if let InitialCondition::Fixed { q, .. } = self.initial {
            QuaternionState::new(q[0], q[1], q[2], q[3])?;
        }
        if let InitialCondition::Angles { chi, phi, psi, .. } = self.initial {
            AngleState::new(chi, phi, psi)?;
        }
        Ok(())
    }

    /// Number of integration steps to reach `t_final`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }

    pub fn kappa_sigma(&self) -> f64 {
        self.kappa * self.noise.sigma
    }
}

/// Right-hand side of the quaternion system with real noise `z`.
#[inline]
pub fn rhs_quaternion(q: &[f64; 4], z: f64, kappa: f64) -> [f64; 4] {
    let kz = kappa * z;
    let [x1, x2, x3, x4] = *q;
    [
        -0.5 * x2 - kz * x4,
        0.5 * x1 - kz * x3,
        -0.5 * x4 + kz * x2,
        0.5 * x3 + kz * x1,
    ]
}

#[inline]
fn axpy(q: &[f64; 4], h: f64, k: &[f64; 4]) -> [f64; 4] {
    [q[0] + h * k[0], q[1] + h * k[1], q[2] + h * k[2], q[3] + h * k[3]]
}

/// Noise values at the start, midpoint and end of one step.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSegment {
    pub start: f64,
    pub mid: f64,
    pub end: f64,
}

/// One RK4 step without renormalization.
#[inline]
pub fn rk4_raw(q: &[f64; 4], noise: NoiseSegment, kappa: f64, dt: f64) -> [f64; 4] {
    let h = 0.5 * dt;
    let k1 = rhs_quaternion(q, noise.start, kappa);
    let k2 = rhs_quaternion(&axpy(q, h, &k1), noise.mid, kappa);
    let k3 = rhs_quaternion(&axpy(q, h, &k2), noise.mid, kappa);
    let k4 = rhs_quaternion(&axpy(q, dt, &k3), noise.end, kappa);
    let w = dt / 6.0;
    [
        q[0] + w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        q[1] + w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        q[2] + w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        q[3] + w * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
    ]
}

/// One RK4 step followed by projection back onto the unit sphere. Also
/// returns `|q'| - 1` before projection.
pub fn step(q: &QuaternionState, noise: NoiseSegment, kappa: f64, dt: f64) -> (QuaternionState, f64) {
    let raw = rk4_raw(&q.to_array(), noise, kappa, dt);
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    (QuaternionState::from_array(raw.map(|v| v / n)), n - 1.0)
}

/// `ρ = x1² + x2² = sin²χ = |<+|U|->|²`.
#[inline]
pub fn transition_probability(q: &QuaternionState) -> f64 {
    (q.x1 * q.x1 + q.x2 * q.x2).clamp(0.0, 1.0)
}

/// `y = 2ρ - 1`.
#[inline]
pub fn y_of(q: &QuaternionState) -> f64 {
    2.0 * transition_probability(q) - 1.0
}

/// Draw the initial group element and noise value for a path.
pub fn initial_state(params: &SimParams, rng: &mut PathRng) -> (QuaternionState, f64) {
    match params.initial {
        InitialCondition::Identity => (QuaternionState::identity(), sample_stationary(&params.noise, rng)),
        InitialCondition::Haar => {
            let a = haar_sample(rng);
            (angles_to_quaternion(&a), sample_stationary(&params.noise, rng))
        }
        InitialCondition::Angles { chi, phi, psi, z } => {
            let q = angles_to_quaternion(&AngleState { chi, phi, psi });
            let z = z.unwrap_or_else(|| sample_stationary(&params.noise, rng));
            (q, z)
        }
        InitialCondition::Fixed { q, z } => (QuaternionState::from_array(q), z),
    }
}

/// Step-by-step integrator for one path.
#[derive(Debug, Clone)]
pub struct Propagator {
    q: QuaternionState,
    noise: NoiseStream,
    kappa: f64,
    dt: f64,
    steps: usize,
    max_norm_defect: f64,
    sum_norm_defect: f64,
}

impl Propagator {
    /// Path `path_index` of the experiment described by `params`.
    pub fn new(params: &SimParams, path_index: u64) -> Result<Self> {
        params.validate()?;
        let mut rng = stream_rng(params.seed, path_index);
        let (q, z0) = initial_state(params, &mut rng);
        Ok(Self::from_state(params, q, z0, rng))
    }

    pub fn from_state(params: &SimParams, q: QuaternionState, z0: f64, rng: PathRng) -> Self {
        Self {
            q,
            noise: NoiseStream::new(&params.noise, 0.5 * params.dt, z0, rng),
            kappa: params.kappa,
            dt: params.dt,
            steps: 0,
            max_norm_defect: 0.0,
            sum_norm_defect: 0.0,
        }
    }

    #[inline]
    pub fn advance(&mut self) {
        let start = self.noise.current();
        let mid = self.noise.advance();
        let end = self.noise.advance();
        let (q, defect) = step(&self.q, NoiseSegment { start, mid, end }, self.kappa, self.dt);
        self.q = q;
        self.steps += 1;
        self.max_norm_defect = self.max_norm_defect.max(defect.abs());
        self.sum_norm_defect += defect.abs();
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn state(&self) -> QuaternionState {
        self.q
    }

    pub fn z(&self) -> f64 {
        self.noise.current()
    }

    pub fn max_norm_defect(&self) -> f64 {
        self.max_norm_defect
    }

    /// Accumulated pre-projection norm error per unit time.
    pub fn norm_drift_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.sum_norm_defect / self.time()
        }
    }
}

/// Recorded path of one noise realisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    pub states: Vec<QuaternionState>,
    pub angles: Vec<AngleState>,
    pub rho: Vec<f64>,
    pub max_norm_defect: f64,
    pub norm_drift_rate: f64,
}

impl Trajectory {
    fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            angles: Vec::with_capacity(n),
            rho: Vec::with_capacity(n),
            max_norm_defect: 0.0,
            norm_drift_rate: 0.0,
        }
    }

    fn record(&mut self, t: f64, z: f64, q: QuaternionState) {
        self.times.push(t);
        self.z.push(z);
        self.states.push(q);
        self.angles.push(quaternion_to_angles(&q));
        self.rho.push(transition_probability(&q));
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `y_t = 2ρ_t - 1` on the recorded grid.
    pub fn y(&self) -> Vec<f64> {
        self.rho.iter().map(|r| 2.0 * r - 1.0).collect()
    }
}

/// Integrate path 0 of `params`.
pub fn simulate(params: &SimParams) -> Result<Trajectory> {
    simulate_path(params, 0)
}

/// Integrate path `path_index` of `params`.
pub fn simulate_path(params: &SimParams, path_index: u64) -> Result<Trajectory> {
    let mut prop = Propagator::new(params, path_index)?;
    let n = params.n_steps();
    let stride = params.output_stride;
    let mut traj = Trajectory::with_capacity(n / stride + 2);
    traj.record(0.0, prop.z(), prop.state());
    for i in 1..=n {
        prop.advance();
        if i % stride == 0 || i == n {
            traj.record(prop.time(), prop.z(), prop.state());
        }
    }
    traj.max_norm_defect = prop.max_norm_defect();
    traj.norm_drift_rate = prop.norm_drift_rate();
    Ok(traj)
}

/// Final `(Z_T, U_T)` of paths `0..n_paths`, evaluated in parallel.
pub fn final_states(params: &SimParams, n_paths: usize) -> Result<Vec<(f64, QuaternionState)>> {
    params.validate()?;
    let n = params.n_steps();
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut prop = Propagator::new(params, i)?;
            for _ in 0..n {
                prop.advance();
            }
            Ok((prop.z(), prop.state()))
        })
        .collect()
}

/// Ensemble mean and standard error of `ρ_t` on the recorded grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMean {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub n_paths: usize,
}

pub fn ensemble_mean_rho(params: &SimParams, n_paths: usize) -> Result<EnsembleMean> {
    ensemble_mean_of(params, n_paths, |_, q| transition_probability(q))
}

/// Ensemble mean of `f(z, q)` over paths `0..n_paths`.
pub fn ensemble_mean_of<F>(params: &SimParams, n_paths: usize, f: F) -> Result<EnsembleMean>
where
    F: Fn(f64, &QuaternionState) -> f64 + Sync,
{
    if n_paths < 2 {
        return Err(Error::Dynamics("ensemble needs at least 2 paths".into()));
    }
    params.validate()?;
    let n = params.n_steps();
    let stride = params.output_stride;
    let per_path: Vec<(Vec<f64>, Vec<f64>)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut prop = Propagator::new(params, i)?;
            let mut times = vec![0.0];
            let mut vals = vec![f(prop.z(), &prop.state())];
            for s in 1..=n {
                prop.advance();
                if s % stride == 0 || s == n {
                    times.push(prop.time());
                    vals.push(f(prop.z(), &prop.state()));
                }
            }
            Ok((times, vals))
        })
        .collect::<Result<_>>()?;
    let times = per_path[0].0.clone();
    let m = times.len();
    let mut sum = vec![0.0; m];
    let mut sum2 = vec![0.0; m];
    for (_, vals) in &per_path {
        for (j, v) in vals.iter().enumerate() {
            sum[j] += v;
            sum2[j] += v * v;
        }
    }
    let nf = n_paths as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let std_err = sum2
        .iter()
        .zip(&mean)
        .map(|(s2, mu)| ((s2 / nf - mu * mu).max(0.0) * nf / (nf - 1.0) / nf).sqrt())
        .collect();
    Ok(EnsembleMean { times, mean, std_err, n_paths })
}

/// Threshold on `|sin 2χ|` below which the angular integrator aborts.
pub const ANGLE_SINGULARITY: f64 = 1e-3;

/// Path integrated directly in `(χ, φ, ψ)`; angles are not wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleTrajectory {
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    pub angles: Vec<AngleState>,
}

/// Right-hand side of the angular system with real noise `z`.
#[inline]
pub fn rhs_angles(a: &[f64; 3], z: f64, kappa: f64) -> [f64; 3] {
    let [chi, phi, _] = *a;
    let (sp, cp) = phi.sin_cos();
    let (s2, c2) = (2.0 * chi).sin_cos();
    let kz = kappa * z;
    [kz * sp, 1.0 + 2.0 * kz * cp * c2 / s2, -kz * cp / s2]
}

/// Integrate the angular system with the same noise as [`simulate_path`].
///
/// Only valid away from `χ ∈ {0, π/2}`; returns an error as soon as
/// `|sin 2χ| < ANGLE_SINGULARITY`.
pub fn simulate_angles_path(params: &SimParams, path_index: u64) -> Result<AngleTrajectory> {
    params.validate()?;
    let mut rng = stream_rng(params.seed, path_index);
    let (q0, z0) = initial_state(params, &mut rng);
    let start = match params.initial {
        InitialCondition::Angles { chi, phi, psi, .. } => AngleState { chi, phi, psi },
        _ => quaternion_to_angles(&q0),
    };
    let mut noise = NoiseStream::new(&params.noise, 0.5 * params.dt, z0, rng);
    let (kappa, dt) = (params.kappa, params.dt);
    let mut a = [start.chi, start.phi, start.psi];
    let n = params.n_steps();
    let stride = params.output_stride;
    let mut out = AngleTrajectory { times: vec![0.0], z: vec![z0], angles: vec![start] };
    let singular = |a: &[f64; 3]| (2.0 * a[0]).sin().abs() < ANGLE_SINGULARITY;
    if singular(&a) {
        return Err(Error::Dynamics(format!("angular system singular at start, chi = {}", a[0])));
    }
    for i in 1..=n {
        let z_start = noise.current();
        let z_mid = noise.advance();
        let z_end = noise.advance();
        let h = 0.5 * dt;
        let k1 = rhs_angles(&a, z_start, kappa);
        let a2 = [a[0] + h * k1[0], a[1] + h * k1[1], a[2] + h * k1[2]];
        let k2 = rhs_angles(&a2, z_mid, kappa);
        let a3 = [a[0] + h * k2[0], a[1] + h * k2[1], a[2] + h * k2[2]];
        let k3 = rhs_angles(&a3, z_mid, kappa);
        let a4 = [a[0] + dt * k3[0], a[1] + dt * k3[1], a[2] + dt * k3[2]];
        let k4 = rhs_angles(&a4, z_end, kappa);
        for j in 0..3 {
            a[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if singular(&a) || !(0.0..=FRAC_PI_2).contains(&a[0]) {
            return Err(Error::Dynamics(format!(
                "angular system near singularity at t = {}, chi = {}",
                i as f64 * dt,
                a[0]
            )));
        }
        if i % stride == 0 || i == n {
            out.times.push(i as f64 * dt);
            out.z.push(z_end);
            out.angles.push(AngleState { chi: a[0], phi: a[1], psi: a[2] });
        }
    }
    Ok(out)
}

pub fn simulate_angles(params: &SimParams) -> Result<AngleTrajectory> {
    simulate_angles_path(params, 0)
}
