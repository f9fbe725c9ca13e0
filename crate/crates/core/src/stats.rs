//! Statistical utilities used by the experiment runners and tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kolmogorov–Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} e^{-2k²λ²}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)
}

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Stats("empty sample".into()));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Stats("NaN in sample".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sided one-sample KS test against a continuous CDF.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    let v = sorted(samples)?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult { statistic: d, p_value: ks_p_value(d, n), n: v.len() })
}

/// KS test against Uniform[0, 1].
pub fn ks_uniform(samples: &[f64]) -> Result<KsResult> {
    ks_test(samples, |x| x.clamp(0.0, 1.0))
}

/// KS test against Uniform[a, b].
pub fn ks_uniform_on(samples: &[f64], a: f64, b: f64) -> Result<KsResult> {
    ks_test(samples, |x| ((x - a) / (b - a)).clamp(0.0, 1.0))
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let (x, y) = (sorted(a)?, sorted(b)?);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = x[i].min(y[j]);
        while i < n && x[i] <= t {
            i += 1;
        }
        while j < m && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    Ok(KsResult { statistic: d, p_value: ks_p_value(d, n_eff), n: n + m })
}

/// Sample mean and standard error of the mean.
pub fn mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Unbiased sample variance.
pub fn variance(samples: &[f64]) -> f64 {
    let (mean, _) = mean_se(samples);
    samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples.len() as f64 - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = intercept + slope·x`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Stats(format!("regression needs >= 2 paired points, got {}/{}", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Stats("regression abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { f64::NAN } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(LinearFit { slope, intercept, r_squared })
}

/// Exponential approach to 1/2: `mean(t) = 1/2 - amplitude·e^{-rate·t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub rate: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Upper edge of the fit window; points closer to saturation are dropped.
pub const RELAXATION_WINDOW: f64 = 0.45;

/// Fit `1/2 - A e^{-rate t}` by linear regression of `ln(1/2 - mean)` on the
/// points where `mean < 0.45`. `r_squared` is that of the log-linear fit.
pub fn relaxation_fit(times: &[f64], means: &[f64]) -> Result<FitResult> {
    if times.len() != means.len() {
        return Err(Error::Stats("times and means differ in length".into()));
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (&t, &m) in times.iter().zip(means) {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::Stats(format!("ensemble mean {m} outside [0, 1]")));
        }
        if m < RELAXATION_WINDOW {
            x.push(t);
            y.push((0.5 - m).ln());
        }
    }
    if x.len() < 3 {
        return Err(Error::Stats(format!("relaxation fit: only {} points in window", x.len())));
    }
    let fit = linear_regression(&x, &y)?;
    let rate = -fit.slope;
    if !(rate > 0.0) || !fit.r_squared.is_finite() {
        return Err(Error::Stats("relaxation fit degenerate: no decay towards 1/2".into()));
    }
    Ok(FitResult { rate, amplitude: fit.intercept.exp(), r_squared: fit.r_squared, n_points: x.len() })
}

/// Biased-normalized sample autocorrelation for lags `0..=max_lag`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if n <= 4 * max_lag || n < 2 {
        return Err(Error::Stats(format!("series of length {n} too short for max_lag {max_lag}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c = |h: usize| series[..n - h].iter().zip(&series[h..]).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>();
    let c0 = c(0);
    if c0 == 0.0 {
        return Ok(vec![1.0; max_lag + 1]);
    }
    Ok((0..=max_lag).map(|h| c(h) / c0).collect())
}
