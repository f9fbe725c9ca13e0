//! First-passage times of `y_t = 2ρ_t - 1`, exponential tail fits and the
//! renewal composition rules used to patch exit times of nested domains.
//!
//! Ensembles stream each path and stop it as soon as every requested level
//! has been crossed, so `t_final` only bounds the censoring horizon.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::relaxation_time;
use crate::dynamics::{y_of, InitialCondition, Propagator, SimParams, Trajectory};
use crate::error::{Error, Result};
use crate::noise::{gaussian, sample_stationary, stream_rng, NoiseParams};
use crate::stats::{linear_regression, mean_se};

/// Means are reported as lower bounds above this censored fraction.
pub const MAX_CENSORED_FRACTION: f64 = 0.1;

/// One first-passage sample. Censored samples carry the horizon as `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub path: u64,
    pub time: f64,
    pub censored: bool,
}

/// Exponential fit of the empirical survival function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub rate: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FptResult {
    pub y_level: f64,
    pub samples: Vec<Passage>,
    /// Mean over uncensored samples.
    pub mean: f64,
    pub std_err: f64,
    pub censored_fraction: f64,
    /// Set when too many samples are censored for `mean` to be more than a
    /// lower bound.
    pub mean_is_lower_bound: bool,
    pub tail: Option<TailFit>,
    pub probe_time: f64,
    /// Empirical `P(τ > probe_time)`.
    pub q_of_t: f64,
}

impl FptResult {
    pub fn from_samples(y_level: f64, samples: Vec<Passage>, probe_time: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Fpt("no first-passage samples".into()));
        }
        let n = samples.len() as f64;
        let done: Vec<f64> = samples.iter().filter(|s| !s.censored).map(|s| s.time).collect();
        let censored_fraction = 1.0 - done.len() as f64 / n;
        let (mean, std_err) = mean_se(&done);
        let tail = tail_fit(&samples).ok();
        let q_of_t = survival_at(&samples, probe_time);
        Ok(Self {
            y_level,
            samples,
            mean,
            std_err,
            censored_fraction,
            mean_is_lower_bound: censored_fraction > MAX_CENSORED_FRACTION,
            tail,
            probe_time,
            q_of_t,
        })
    }

    pub fn survival(&self, t: f64) -> f64 {
        survival_at(&self.samples, t)
    }
}

/// Empirical `P(τ > t)`; censored samples count as surviving up to their horizon.
pub fn survival_at(samples: &[Passage], t: f64) -> f64 {
    let alive = samples.iter().filter(|s| s.time > t || (s.censored && s.time >= t)).count();
    alive as f64 / samples.len() as f64
}

/// Regress `ln S(t)` on `t` over the upper half of the sorted sample.
pub fn tail_fit(samples: &[Passage]) -> Result<TailFit> {
    let n = samples.len();
    let mut times: Vec<f64> = samples.iter().filter(|s| !s.censored).map(|s| s.time).collect();
    times.sort_by(f64::total_cmp);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, &t) in times.iter().enumerate() {
        // S just after the (i+1)-th event; censored samples stay in the risk set
        let s = (n - i - 1) as f64 / n as f64;
        if 2 * i >= n && s > 0.0 {
            x.push(t);
            y.push(s.ln());
        }
    }
    if x.len() < 3 {
        return Err(Error::Fpt(format!("tail fit needs >= 3 points, have {}", x.len())));
    }
    let fit = linear_regression(&x, &y)?;
    if !(fit.slope < 0.0) {
        return Err(Error::Fpt("survival tail does not decay".into()));
    }
    Ok(TailFit { rate: -fit.slope, r_squared: fit.r_squared, n_points: x.len() })
}

/// Crossing time of `level` between two grid points, by linear interpolation.
fn crossing(t0: f64, y0: f64, t1: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        return t1;
    }
    t0 + (t1 - t0) * ((level - y0) / (y1 - y0)).clamp(0.0, 1.0)
}

/// First time `y_t > y_level` on a stored trajectory. A path that starts at or
/// above the level has passage time 0.
pub fn first_passage(traj: &Trajectory, y_level: f64) -> Passage {
    let y = traj.y();
    let horizon = traj.times.last().copied().unwrap_or(0.0);
    if y.first().is_some_and(|&y0| y0 >= y_level) {
        return Passage { path: 0, time: 0.0, censored: false };
    }
    for i in 1..y.len() {
        if y[i] > y_level {
            let t = crossing(traj.times[i - 1], y[i - 1], traj.times[i], y[i], y_level);
            return Passage { path: 0, time: t, censored: false };
        }
    }
    Passage { path: 0, time: horizon, censored: true }
}

/// Passage times of one path for several levels, stopping once all are crossed.
pub fn path_passages(params: &SimParams, path: u64, levels: &[f64]) -> Result<Vec<Passage>> {
    let mut prop = Propagator::new(params, path)?;
    let n = params.n_steps();
    let mut out: Vec<Option<Passage>> = vec![None; levels.len()];
    let mut y_prev = y_of(&prop.state());
    let mut t_prev = 0.0;
    for (slot, &level) in out.iter_mut().zip(levels) {
        if y_prev >= level {
            *slot = Some(Passage { path, time: 0.0, censored: false });
        }
    }
    let mut remaining = out.iter().filter(|s| s.is_none()).count();
    let mut step = 0;
    while remaining > 0 && step < n {
        prop.advance();
        step += 1;
        let (t, y) = (prop.time(), y_of(&prop.state()));
        for (slot, &level) in out.iter_mut().zip(levels) {
            if slot.is_none() && y > level {
                *slot = Some(Passage { path, time: crossing(t_prev, y_prev, t, y, level), censored: false });
                remaining -= 1;
            }
        }
        (t_prev, y_prev) = (t, y);
    }
    Ok(out
        .into_iter()
        .map(|s| s.unwrap_or(Passage { path, time: prop.time(), censored: true }))
        .collect())
}

/// First-passage ensembles for several levels on the same paths `0..n_paths`.
/// `q_of_t` is probed at `T*`.
pub fn fpt_ensemble_levels(params: &SimParams, levels: &[f64], n_paths: usize) -> Result<Vec<FptResult>> {
    if n_paths == 0 || levels.is_empty() {
        return Err(Error::Fpt("need at least one path and one level".into()));
    }
    params.validate()?;
    let per_path: Vec<Vec<Passage>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| path_passages(params, i, levels))
        .collect::<Result<_>>()?;
    let probe = relaxation_time(params.noise.gamma, params.kappa_sigma()).min(params.t_final);
    levels
        .iter()
        .enumerate()
        .map(|(j, &level)| FptResult::from_samples(level, per_path.iter().map(|p| p[j]).collect(), probe))
        .collect()
}

pub fn fpt_ensemble(params: &SimParams, y_level: f64, n_paths: usize) -> Result<FptResult> {
    Ok(fpt_ensemble_levels(params, &[y_level], n_paths)?.remove(0))
}

/// Exit domain for `(y, Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub y_low: f64,
    pub y_high: f64,
    pub z_bound: f64,
}

impl DomainSpec {
    pub fn new(y_low: f64, y_high: f64, z_bound: f64) -> Result<Self> {
        let d = Self { y_low, y_high, z_bound };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0 <= self.y_low && self.y_low < self.y_high && self.y_high <= 1.0) {
            return Err(Error::Fpt(format!("need -1 <= y_low < y_high <= 1, got [{}, {}]", self.y_low, self.y_high)));
        }
        if !(self.z_bound > 0.0) {
            return Err(Error::Fpt(format!("z_bound must be > 0, got {}", self.z_bound)));
        }
        Ok(())
    }

    /// Strictly outside the interval or beyond the noise cap.
    pub fn exited(&self, y: f64, z: f64) -> bool {
        y < self.y_low || y > self.y_high || z.abs() > self.z_bound
    }
}

/// Initial condition with `y_0 = y` (φ = ψ = 0) and the given `Z_0`.
pub fn start_at(y: f64, z: f64) -> InitialCondition {
    let rho = (0.5 * (1.0 + y)).clamp(0.0, 1.0);
    InitialCondition::Angles { chi: rho.sqrt().asin(), phi: 0.0, psi: 0.0, z: Some(z) }
}

/// How a domain exit happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitSide {
    Low,
    High,
    Noise,
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exit {
    pub time: f64,
    pub side: ExitSide,
}

fn exit_of(prop: &mut Propagator, domain: &DomainSpec, max_steps: usize) -> Exit {
    for _ in 0..max_steps {
        prop.advance();
        let (y, z) = (y_of(&prop.state()), prop.z());
        if domain.exited(y, z) {
            let side = if y > domain.y_high {
                ExitSide::High
            } else if y < domain.y_low {
                ExitSide::Low
            } else {
                ExitSide::Noise
            };
            return Exit { time: prop.time(), side };
        }
    }
    Exit { time: prop.time(), side: ExitSide::Censored }
}

/// Exit times of `domain` for paths started by `params.initial`.
pub fn exit_ensemble(params: &SimParams, domain: &DomainSpec, n_paths: usize) -> Result<Vec<Exit>> {
    params.validate()?;
    domain.validate()?;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| Ok(exit_of(&mut Propagator::new(params, i)?, domain, params.n_steps())))
        .collect()
}

/// Worst-of-grid survival estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalProbe {
    pub t_probe: f64,
    /// Largest survival fraction over the start grid.
    pub q: f64,
    pub worst_z0: f64,
    pub worst_y0: f64,
    /// `T/(q ln(1/q))`, absent when `q` is 0 or 1.
    pub mean_bound: Option<f64>,
    /// `(z0, y0, survival)` for every grid point.
    pub grid: Vec<(f64, f64, f64)>,
}

/// `T/(q ln(1/q))`, or `None` for `q ∈ {0, 1}`.
pub fn implied_mean_bound(t_probe: f64, q: f64) -> Option<f64> {
    (q > 0.0 && q < 1.0).then(|| t_probe / (q * (1.0 / q).ln()))
}

/// Estimate `sup P(τ_D > T)` over a 5×5 grid of interior `(Z_0, y_0)` with
/// `φ_0 = ψ_0 = 0`, using `n_paths` per grid point.
pub fn survival_probe(params: &SimParams, domain: &DomainSpec, t_probe: f64, n_paths: usize) -> Result<SurvivalProbe> {
    domain.validate()?;
    if !(t_probe > 0.0) || n_paths == 0 {
        return Err(Error::Fpt("survival probe needs T > 0 and at least one path".into()));
    }
    let steps = (t_probe / params.dt).round() as usize;
    let probe_params = params.with_t_final(t_probe);
    let mut grid = Vec::with_capacity(25);
    for a in 0..5 {
        let z0 = domain.z_bound * (a as f64 - 2.0) / 3.0;
        for b in 0..5 {
            let y0 = domain.y_low + (domain.y_high - domain.y_low) * (b as f64 + 1.0) / 6.0;
            let p = probe_params.with_initial(start_at(y0, z0));
            let alive = (0..n_paths as u64)
                .into_par_iter()
                .map(|i| Ok(exit_of(&mut Propagator::new(&p, i)?, domain, steps).side == ExitSide::Censored))
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .filter(|&x| x)
                .count();
            grid.push((z0, y0, alive as f64 / n_paths as f64));
        }
    }
    let &(worst_z0, worst_y0, q) = grid.iter().max_by(|a, b| a.2.total_cmp(&b.2)).expect("grid is non-empty");
    Ok(SurvivalProbe { t_probe, q, worst_z0, worst_y0, mean_bound: implied_mean_bound(t_probe, q), grid })
}

/// `(E1 + E2)/p`: expected time when each attempt costs `E1 + E2` and
/// succeeds with probability `p`.
pub fn renewal_compose(e1: f64, e2: f64, p_success: f64) -> Result<f64> {
    if !(p_success > 0.0 && p_success <= 1.0) {
        return Err(Error::Fpt(format!("success probability must be in (0, 1], got {p_success}")));
    }
    Ok((e1 + e2) / p_success)
}

/// `2(E1 + E2)/(1 - p1 p2)`.
pub fn renewal_bound(e1: f64, e2: f64, p1: f64, p2: f64) -> Result<f64> {
    if !(p1 * p2 < 1.0) {
        return Err(Error::Fpt(format!("renewal bound needs p1·p2 < 1, got {}", p1 * p2)));
    }
    Ok(2.0 * (e1 + e2) / (1.0 - p1 * p2))
}

/// Stage estimates and direct measurement for the nested-interval experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalExperiment {
    /// Mean time from `y = -1` to `stage_level`.
    pub e1: f64,
    /// Mean exit time of `(retry_level, target)` from the stage-1 state.
    pub e2: f64,
    /// Fraction of stage-2 exits through the top.
    pub p_up: f64,
    pub composed: f64,
    pub bound: f64,
    /// Mean `τ(target)` measured on the same paths.
    pub direct: f64,
    pub direct_se: f64,
    pub censored: usize,
}

/// Run paths from `params.initial` to `target`, recording the first passage
/// over `stage_level` and the subsequent exit of `(retry_level, target)`.
pub fn nested_renewal_experiment(
    params: &SimParams,
    stage_level: f64,
    retry_level: f64,
    target: f64,
    n_paths: usize,
) -> Result<RenewalExperiment> {
    if !(retry_level < stage_level && stage_level < target) {
        return Err(Error::Fpt("need retry_level < stage_level < target".into()));
    }
    params.validate()?;
    let n = params.n_steps();
    let runs: Vec<Option<(f64, f64, bool, f64)>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut prop = Propagator::new(params, i)?;
            let (mut t1, mut exit2) = (None, None);
            for _ in 0..n {
                prop.advance();
                let (t, y) = (prop.time(), y_of(&prop.state()));
                match (t1, exit2) {
                    (None, _) if y > stage_level => t1 = Some(t),
                    (Some(s), None) if y > target || y < retry_level => exit2 = Some((t - s, y > target)),
                    _ => {}
                }
                if y > target {
                    let (s, (d, up)) = (t1.unwrap_or(t), exit2.unwrap_or((0.0, true)));
                    return Ok(Some((s, d, up, t)));
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    let done: Vec<_> = runs.iter().flatten().collect();
    if done.len() < 2 {
        return Err(Error::Fpt("nested experiment: too few paths reached the target".into()));
    }
    let m = done.len() as f64;
    let e1 = done.iter().map(|r| r.0).sum::<f64>() / m;
    let e2 = done.iter().map(|r| r.1).sum::<f64>() / m;
    let p_up = done.iter().filter(|r| r.2).count() as f64 / m;
    let (direct, direct_se) = mean_se(&done.iter().map(|r| r.3).collect::<Vec<_>>());
    let composed = renewal_compose(e1, e2, p_up)?;
    let bound = renewal_bound(e1, e2, 1.0, 1.0 - p_up)?;
    Ok(RenewalExperiment { e1, e2, p_up, composed, bound, direct, direct_se, censored: n_paths - done.len() })
}

/// Mean of OU hitting times with censoring information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub censored: usize,
    pub n_paths: usize,
}

fn ou_hitting<F>(noise: &NoiseParams, z0: Option<f64>, hit: F, dt: f64, horizon: f64, n_paths: usize, seed: u64) -> Result<HittingEstimate>
where
    F: Fn(f64) -> bool + Sync,
{
    noise.validate()?;
    if !(dt > 0.0 && horizon > 0.0) || n_paths < 2 {
        return Err(Error::Fpt("need dt > 0, horizon > 0 and at least 2 paths".into()));
    }
    let kernel = noise.kernel(dt);
    let max_steps = (horizon / dt).ceil() as usize;
    let times: Vec<Option<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let mut z = z0.unwrap_or_else(|| sample_stationary(noise, &mut rng));
            if hit(z) {
                return Some(0.0);
            }
            for s in 1..=max_steps {
                z = kernel.apply(z, gaussian(&mut rng));
                if hit(z) {
                    return Some(s as f64 * dt);
                }
            }
            None
        })
        .collect();
    let done: Vec<f64> = times.iter().flatten().copied().collect();
    let (mean, std_err) = mean_se(&done);
    Ok(HittingEstimate { mean, std_err, censored: n_paths - done.len(), n_paths })
}

/// Mean first time `|Z_t| ≥ level` from a stationary start, on a grid of step `dt`.
pub fn z_excursion_time(noise: &NoiseParams, level: f64, dt: f64, horizon: f64, n_paths: usize, seed: u64) -> Result<HittingEstimate> {
    if !(level >= 0.0) {
        return Err(Error::Fpt(format!("excursion level must be >= 0, got {level}")));
    }
    ou_hitting(noise, None, |z| z.abs() >= level, dt, horizon, n_paths, seed)
}

/// Mean first time `Z_t` changes sign from `z0 > 0`.
pub fn z_return_time(noise: &NoiseParams, z0: f64, dt: f64, horizon: f64, n_paths: usize, seed: u64) -> Result<HittingEstimate> {
    ou_hitting(noise, Some(z0), |z| z <= 0.0, dt, horizon, n_paths, seed)
}
