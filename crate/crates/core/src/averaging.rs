//! Averaging transformation and the effective diffusion for `y = 2ρ - 1`.
//!
//! In the variables `(Z, y, φ)` the slow coordinate obeys
//! `dy = 2κZ √(1-y²) sin φ dt`, whose φ-average vanishes. The corrector
//! `w(Z, y, φ)` removes the oscillating term at first order: the variable
//! `ȳ = y + κw` satisfies exactly
//!
//! ```text
//! dȳ = -4κ²γ/(1+γ²) Z² y dt + 2κσ/(1+γ²) √(1-y²) (cos φ + γ sin φ) dW
//! ```
//!
//! and, after replacing `Z²` and `cos²` by their averages and rescaling time,
//! the one-dimensional diffusion `dȳ = -ȳ dt + √(1-ȳ²) dW`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{final_states, initial_state, y_of, SimParams, Trajectory};
use crate::error::{Error, Result};
use crate::noise::{gaussian, stream_rng, NoiseParams, PathRng};
use crate::stats::{ks_two_sample, KsResult};
use crate::su2::{quaternion_to_angles, QuaternionState};

/// Relaxation time `max((1+γ²)/(κσ)², 1/γ)`.
pub fn relaxation_time(gamma: f64, kappa_sigma: f64) -> f64 {
    let slow = (1.0 + gamma * gamma) / (kappa_sigma * kappa_sigma);
    slow.max(1.0 / gamma)
}

/// Timescales of the effective dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    /// `max((1+γ²)/(κσ)², 1/γ)`.
    pub tstar: f64,
    /// Phase shift `arctan γ`.
    pub theta: f64,
    /// Physical time per unit of rescaled time for the normalized 1D diffusion.
    pub time_rescale: f64,
}

impl EffectiveParams {
    /// Default rescale `T*/2`: the averaged drift is `-2ȳ/T*`, so `s = 2t/T*`
    /// turns it into `dȳ = -ȳ ds + √(1-ȳ²) dW_s`.
    pub fn new(gamma: f64, kappa: f64, sigma: f64) -> Self {
        let tstar = relaxation_time(gamma, kappa * sigma);
        Self { tstar, theta: gamma.atan(), time_rescale: 0.5 * tstar }
    }

    pub fn with_time_rescale(mut self, factor: f64) -> Self {
        self.time_rescale = factor;
        self
    }

    /// Rescaled time corresponding to physical time `t`.
    pub fn rescaled(&self, t: f64) -> f64 {
        t / self.time_rescale
    }
}

/// `y` and its corrected counterpart `ȳ = y + κw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YState {
    pub y: f64,
    pub ybar: f64,
}

impl YState {
    pub fn new(z: f64, y: f64, phi: f64, gamma: f64, kappa: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&y) {
            return Err(Error::Averaging(format!("y = {y} outside [-1, 1]")));
        }
        Ok(Self { y, ybar: y + kappa * corrector_w(z, y, phi, gamma) })
    }
}

/// `w = 2Z/(1+γ²) √(1-y²) (cos φ + γ sin φ)`.
pub fn corrector_w(z: f64, y: f64, phi: f64, gamma: f64) -> f64 {
    let s = (1.0 - y * y).max(0.0).sqrt();
    let (sp, cp) = phi.sin_cos();
    2.0 * z / (1.0 + gamma * gamma) * s * (cp + gamma * sp)
}

/// Residual of `2Z√(1-y²) sin φ - γZ ∂w/∂Z + ∂w/∂φ`, derivatives by central
/// differences of step `h`. Vanishes for the exact corrector.
pub fn homological_residual(z: f64, y: f64, phi: f64, gamma: f64, h: f64) -> f64 {
    let dwdz = (corrector_w(z + h, y, phi, gamma) - corrector_w(z - h, y, phi, gamma)) / (2.0 * h);
    let dwdphi = (corrector_w(z, y, phi + h, gamma) - corrector_w(z, y, phi - h, gamma)) / (2.0 * h);
    2.0 * z * (1.0 - y * y).max(0.0).sqrt() * phi.sin() - gamma * z * dwdz + dwdphi
}

/// Leading-order drift `-4κ²γ/(1+γ²) Z² ȳ`.
pub fn effective_drift(z: f64, ybar: f64, gamma: f64, kappa: f64) -> f64 {
    -4.0 * kappa * kappa * gamma / (1.0 + gamma * gamma) * z * z * ybar
}

/// Leading-order diffusion `2κσ √((1-ȳ²)/(1+γ²)) cos(φ + θ)`, `θ = arctan γ`.
pub fn effective_diffusion(ybar: f64, phi: f64, noise: &NoiseParams, kappa: f64) -> f64 {
    let g = noise.gamma;
    let s = ((1.0 - ybar * ybar).max(0.0) / (1.0 + g * g)).sqrt();
    2.0 * kappa * noise.sigma * s * (phi + g.atan()).cos()
}

/// Exact drift of `ȳ` in terms of the uncorrected `y`.
pub fn corrected_drift_exact(z: f64, y: f64, gamma: f64, kappa: f64) -> f64 {
    effective_drift(z, y, gamma, kappa)
}

/// Exact diffusion coefficient of `ȳ` in terms of the uncorrected `y`.
pub fn corrected_diffusion_exact(y: f64, phi: f64, noise: &NoiseParams, kappa: f64) -> f64 {
    let g = noise.gamma;
    let (sp, cp) = phi.sin_cos();
    2.0 * kappa * noise.sigma / (1.0 + g * g) * (1.0 - y * y).max(0.0).sqrt() * (cp + g * sp)
}

/// One Euler–Maruyama step of `dȳ = -ȳ dt + √(1-ȳ²) dW`, clamped to [-1, 1].
pub fn effective_1d_step(ybar: f64, dt: f64, gaussian_draw: f64) -> f64 {
    let diff = (1.0 - ybar * ybar).max(0.0).sqrt();
    (ybar - ybar * dt + diff * dt.sqrt() * gaussian_draw).clamp(-1.0, 1.0)
}

/// Diffusion coefficient `√(1-ȳ²)` of the normalized process.
pub fn effective_1d_diffusion(ybar: f64) -> f64 {
    (1.0 - ybar * ybar).max(0.0).sqrt()
}

/// Run the normalized 1D diffusion from `ybar0` for rescaled time `t`.
pub fn simulate_effective_1d(ybar0: f64, t: f64, dt: f64, rng: &mut PathRng) -> Result<f64> {
    if !(-1.0..=1.0).contains(&ybar0) {
        return Err(Error::Averaging(format!("ybar0 = {ybar0} outside [-1, 1]")));
    }
    if !(dt > 0.0 && t >= 0.0) {
        return Err(Error::Averaging("need dt > 0 and t >= 0".into()));
    }
    let n = (t / dt).round() as usize;
    let mut y = ybar0;
    for _ in 0..n {
        y = effective_1d_step(y, dt, gaussian(rng));
    }
    Ok(y)
}

/// Final values of `n_paths` runs of the normalized 1D diffusion; path `i`
/// uses stream `i` of `seed`.
pub fn effective_1d_ensemble(ybar0: f64, t: f64, dt: f64, n_paths: usize, seed: u64) -> Result<Vec<f64>> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_effective_1d(ybar0, t, dt, &mut stream_rng(seed, i)))
        .collect()
}

/// `ȳ = y + κw` along a recorded trajectory.
pub fn corrected_path(traj: &Trajectory, gamma: f64, kappa: f64) -> Vec<f64> {
    traj.rho
        .iter()
        .zip(&traj.z)
        .zip(&traj.angles)
        .map(|((r, &z), a)| {
            let y = 2.0 * r - 1.0;
            y + kappa * corrector_w(z, y, a.phi, gamma)
        })
        .collect()
}

/// Compare the increments of `ȳ` with the exact corrected equation
/// integrated along the same path, using `σ dW = dZ + γZ dt`.
///
/// Returns the largest deviation of the cumulative sums over the record.
/// The trajectory must be recorded at every step.
pub fn pathwise_residual(traj: &Trajectory, noise: &NoiseParams, kappa: f64) -> Result<f64> {
    if traj.len() < 2 {
        return Err(Error::Averaging("trajectory too short".into()));
    }
    let g = noise.gamma;
    let ybar = corrected_path(traj, g, kappa);
    let y = traj.y();
    let coef = |i: usize| {
        let (sp, cp) = traj.angles[i].phi.sin_cos();
        2.0 * kappa / (1.0 + g * g) * (1.0 - y[i] * y[i]).max(0.0).sqrt() * (cp + g * sp)
    };
    let mut predicted = 0.0;
    let mut worst: f64 = 0.0;
    for i in 0..traj.len() - 1 {
        let dt = traj.times[i + 1] - traj.times[i];
        let (z0, z1) = (traj.z[i], traj.z[i + 1]);
        let drift = 0.5 * (corrected_drift_exact(z0, y[i], g, kappa) + corrected_drift_exact(z1, y[i + 1], g, kappa));
        let sdw = z1 - z0 + g * 0.5 * (z0 + z1) * dt;
        predicted += drift * dt + 0.5 * (coef(i) + coef(i + 1)) * sdw;
        worst = worst.max((ybar[i + 1] - ybar[0] - predicted).abs());
    }
    Ok(worst)
}

/// Law of `ȳ` at `t_final` from the full dynamics against the normalized 1D
/// diffusion at the matching rescaled time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingComparison {
    pub effective: EffectiveParams,
    pub rescaled_time: f64,
    pub ybar0: f64,
    pub full: Vec<f64>,
    pub reduced: Vec<f64>,
    pub ks: KsResult,
}

/// Run `n_paths` full paths to `params.t_final` and as many 1D paths (step
/// `dt_1d`, seed `params.seed + 1`) started from `ȳ` of path 0's initial state.
pub fn compare_with_effective(params: &SimParams, n_paths: usize, dt_1d: f64) -> Result<AveragingComparison> {
    let (gamma, kappa) = (params.noise.gamma, params.kappa);
    let effective = EffectiveParams::new(gamma, kappa, params.noise.sigma);
    let (q0, z0) = initial_state(params, &mut stream_rng(params.seed, 0));
    let ybar0 = ybar_of(z0, &q0, gamma, kappa);
    let full: Vec<f64> = final_states(params, n_paths)?
        .iter()
        .map(|(z, q)| ybar_of(*z, q, gamma, kappa))
        .collect();
    let rescaled_time = effective.rescaled(params.n_steps() as f64 * params.dt);
    let reduced = effective_1d_ensemble(ybar0.clamp(-1.0, 1.0), rescaled_time, dt_1d, n_paths, params.seed.wrapping_add(1))?;
    let ks = ks_two_sample(&full, &reduced)?;
    Ok(AveragingComparison { effective, rescaled_time, ybar0, full, reduced, ks })
}

fn ybar_of(z: f64, q: &QuaternionState, gamma: f64, kappa: f64) -> f64 {
    let y = y_of(q);
    y + kappa * corrector_w(z, y, quaternion_to_angles(q).phi, gamma)
}

/// `X_t = (2γ/σ²)(1/t)∫₀ᵗ Z_s² ds - 1`, trapezoid rule on the stored grid.
///
/// `t` must not exceed the last grid time; the integral is truncated at `t`
/// by linear interpolation of `Z²`.
pub fn time_average_x(times: &[f64], values: &[f64], noise: &NoiseParams, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Averaging(format!("time average needs t > 0, got {t}")));
    }
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::Averaging("noise path too short".into()));
    }
    let t0 = times[0];
    if t0 + t > times[times.len() - 1] * (1.0 + 1e-12) {
        return Err(Error::Averaging(format!("t = {t} beyond the path horizon")));
    }
    if noise.sigma == 0.0 {
        return Err(Error::Averaging("time average undefined for sigma = 0".into()));
    }
    let end = t0 + t;
    let mut integral = 0.0;
    for i in 0..times.len() - 1 {
        let (a, b) = (times[i], times[i + 1]);
        if a >= end {
            break;
        }
        let (fa, fb) = (values[i] * values[i], values[i + 1] * values[i + 1]);
        if b <= end {
            integral += 0.5 * (b - a) * (fa + fb);
        } else {
            let fe = fa + (fb - fa) * (end - a) / (b - a);
            integral += 0.5 * (end - a) * (fa + fe);
        }
    }
    Ok(2.0 * noise.gamma / (noise.sigma * noise.sigma) * integral / t - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn corrector_vanishes_at_poles() {
        assert_eq!(corrector_w(0.7, 1.0, 0.3, 2.0), 0.0);
        assert_eq!(corrector_w(0.7, -1.0, 0.3, 2.0), 0.0);
        assert_eq!(corrector_w(1.0, 0.0, 0.0, 0.0), 2.0);
    }

    #[test]
    fn corrector_periodic_and_odd() {
        let (z, y, phi, g) = (0.4, 0.3, 1.3, 0.7);
        let w = corrector_w(z, y, phi, g);
        assert_eq!(corrector_w(-z, y, phi, g), -w);
        assert!((corrector_w(z, y, phi + std::f64::consts::TAU, g) - w).abs() < 1e-15);
    }

    #[test]
    fn homological_equation_holds() {
        let mut rng = stream_rng(11, 0);
        for _ in 0..100 {
            let z = rng.random_range(-2.0..2.0);
            let y = rng.random_range(-1.0..1.0);
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let g = rng.random_range(0.1..5.0);
            assert!(homological_residual(z, y, phi, g, 1e-5).abs() < 1e-6);
        }
    }

    #[test]
    fn drift_values() {
        assert_eq!(effective_drift(1.3, 0.0, 1.0, 0.5), 0.0);
        assert!((effective_drift(1.0, 0.5, 1.0, 0.1) + 0.01).abs() < 1e-16);
    }

    #[test]
    fn one_d_diffusion_vanishes_at_boundary() {
        assert_eq!(effective_1d_diffusion(1.0), 0.0);
        assert_eq!(effective_1d_diffusion(-1.0), 0.0);
        assert_eq!(effective_1d_step(1.0, 0.01, 5.0), 0.99);
        assert_eq!(effective_1d_step(0.9, 0.01, 1e6), 1.0);
    }

    #[test]
    fn tstar_and_theta() {
        let e = EffectiveParams::new(1.0, 1.0, 0.1);
        assert!((e.tstar - 200.0).abs() < 1e-9);
        assert!((e.theta - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((e.time_rescale - 100.0).abs() < 1e-9);
        assert_eq!(relaxation_time(1e-6, 10.0), 1e6);
    }

    #[test]
    fn constant_noise_time_average() {
        let p = NoiseParams::new(2.0, 0.5).unwrap();
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let c = 0.3;
        let vals = vec![c; times.len()];
        let expected = 2.0 * 2.0 * c * c / 0.25 - 1.0;
        for t in [0.05, 1.0, 3.33, 10.0] {
            assert!((time_average_x(&times, &vals, &p, t).unwrap() - expected).abs() < 1e-12);
        }
        assert!(time_average_x(&times, &vals, &p, 0.0).is_err());
        assert!(time_average_x(&times, &vals, &p, 11.0).is_err());
    }

    #[test]
    fn ystate_rejects_out_of_range() {
        assert!(YState::new(0.1, 1.2, 0.0, 1.0, 0.1).is_err());
        let s = YState::new(0.0, 0.2, 0.0, 1.0, 0.1).unwrap();
        assert_eq!(s.ybar, 0.2);
    }
}
