//! Ornstein–Uhlenbeck driving noise.
//!
//! The noise enters the Hamiltonian as the off-diagonal amplitude `Z_t`, with
//! `dZ = -γ Z dt + σ dW`. Paths are generated with the exact Gaussian
//! transition kernel, so the grid spacing never biases the marginals.
//!
//! # Random streams
//!
//! Every experiment has one master seed. Path `i` draws from a ChaCha8 stream
//! keyed by the master seed with stream id `i` (see [`stream_rng`]). Streams
//! are independent and each path is reproducible on its own, regardless of the
//! order in which paths are evaluated.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Random generator used throughout the crate.
pub type PathRng = ChaCha8Rng;

/// RNG for path `stream` of an experiment with the given master seed.
pub fn stream_rng(master_seed: u64, stream: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal draw.
#[inline]
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Parameters of the OU process: decay rate `gamma` and intensity `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub gamma: f64,
    pub sigma: f64,
}

impl NoiseParams {
    pub fn new(gamma: f64, sigma: f64) -> Result<Self> {
        let p = Self { gamma, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Noise(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Noise(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }

    /// σ²/(2γ).
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.gamma)
    }

    pub fn stationary_std(&self) -> f64 {
        self.stationary_variance().sqrt()
    }

    /// Stationary autocovariance at lag `t`.
    pub fn autocovariance(&self, t: f64) -> f64 {
        self.stationary_variance() * (-self.gamma * t.abs()).exp()
    }

    /// Precomputed exact transition for a fixed step.
    pub fn kernel(&self, dt: f64) -> OuKernel {
        let decay = (-self.gamma * dt).exp();
        // 1 - e^{-2γdt} via expm1 keeps precision for small γ·dt.
        let var = self.stationary_variance() * -(-2.0 * self.gamma * dt).exp_m1();
        OuKernel { decay, scale: var.sqrt() }
    }
}

/// A stationary Markov noise that can be sampled and stepped.
///
/// Only the OU process ships; other noises from the general `dZ = f dt + g dW`
/// family can plug in through this trait.
pub trait StationaryNoise: Send + Sync {
    /// Draw from the invariant law.
    fn sample_stationary(&self, rng: &mut PathRng) -> f64;
    /// Advance `z` by `dt` given one standard normal draw.
    fn step(&self, z: f64, dt: f64, gaussian_draw: f64) -> f64;
}

impl StationaryNoise for NoiseParams {
    fn sample_stationary(&self, rng: &mut PathRng) -> f64 {
        sample_stationary(self, rng)
    }

    fn step(&self, z: f64, dt: f64, gaussian_draw: f64) -> f64 {
        ou_exact_step(z, self, dt, gaussian_draw)
    }
}

/// Exact one-step OU transition for a fixed `dt`.
#[derive(Debug, Clone, Copy)]
pub struct OuKernel {
    decay: f64,
    scale: f64,
}

impl OuKernel {
    #[inline]
    pub fn apply(&self, z: f64, gaussian_draw: f64) -> f64 {
        z * self.decay + self.scale * gaussian_draw
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Standard deviation of the one-step increment.
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Draw `Z_0` from N(0, σ²/2γ).
pub fn sample_stationary<R: Rng + ?Sized>(params: &NoiseParams, rng: &mut R) -> f64 {
    if params.sigma == 0.0 {
        return 0.0;
    }
    params.stationary_std() * gaussian(rng)
}

/// `z e^{-γ dt} + sqrt(σ²(1 - e^{-2γ dt})/2γ) · draw`.
pub fn ou_exact_step(z: f64, params: &NoiseParams, dt: f64, gaussian_draw: f64) -> f64 {
    params.kernel(dt).apply(z, gaussian_draw)
}

/// A sampled noise path on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl NoisePath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Noise("empty time grid".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Noise("non-finite time in grid".into()));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::Noise(format!(
            "time grid must be strictly increasing ({} followed by {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Stationary OU path on `grid`, using stream 0 of `seed`.
pub fn sample_path(params: &NoiseParams, grid: &[f64], seed: u64) -> Result<NoisePath> {
    params.validate()?;
    check_grid(grid)?;
    let mut rng = stream_rng(seed, 0);
    let z0 = sample_stationary(params, &mut rng);
    let values = path_from(params, grid, z0, &mut rng);
    Ok(NoisePath { times: grid.to_vec(), values, seed })
}

/// OU path on `grid` started from a given `z0`, drawing from `rng`.
pub fn sample_path_from(
    params: &NoiseParams,
    grid: &[f64],
    z0: f64,
    rng: &mut PathRng,
    seed: u64,
) -> Result<NoisePath> {
    params.validate()?;
    check_grid(grid)?;
    let values = path_from(params, grid, z0, rng);
    Ok(NoisePath { times: grid.to_vec(), values, seed })
}

fn path_from<R: Rng + ?Sized>(params: &NoiseParams, grid: &[f64], z0: f64, rng: &mut R) -> Vec<f64> {
    let mut values = Vec::with_capacity(grid.len());
    let mut z = z0;
    values.push(z);
    for w in grid.windows(2) {
        z = ou_exact_step(z, params, w[1] - w[0], gaussian(rng));
        values.push(z);
    }
    values
}

/// Streaming OU sampler with a fixed step, used by the integrators.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    kernel: OuKernel,
    z: f64,
    rng: PathRng,
}

impl NoiseStream {
    pub fn new(params: &NoiseParams, dt: f64, z0: f64, rng: PathRng) -> Self {
        Self { kernel: params.kernel(dt), z: z0, rng }
    }

    pub fn current(&self) -> f64 {
        self.z
    }

    /// Advance one step and return the new value.
    #[inline]
    pub fn advance(&mut self) -> f64 {
        self.z = self.kernel.apply(self.z, gaussian(&mut self.rng));
        self.z
    }

    pub fn rng_mut(&mut self) -> &mut PathRng {
        &mut self.rng
    }
}
