use spinbath::averaging::{
    effective_1d_ensemble, pathwise_residual, time_average_x,
};
use spinbath::dynamics::{simulate, SimParams};
use spinbath::noise::{sample_path, sample_stationary, stream_rng, NoiseParams};
use spinbath::stats::{ks_uniform_on, linear_regression, mean_se};

#[test]
fn effective_mean_decays_exponentially() {
    let finals = effective_1d_ensemble(0.5, 1.0, 1e-3, 10_000, 1).unwrap();
    let (m, se) = mean_se(&finals);
    let expected = 0.5 / std::f64::consts::E;
    assert!((m - expected).abs() < 3.0 * se, "{m} vs {expected} ± {se}");
}

#[test]
fn effective_stationary_law_is_uniform() {
    let finals = effective_1d_ensemble(0.5, 8.0, 1e-3, 3000, 2).unwrap();
    let ks = ks_uniform_on(&finals, -1.0, 1.0).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn corrected_variable_follows_exact_equation() {
    let p = SimParams::new(1.0, 0.05, 1.0, 1e-3, 10.0, 3)
        .unwrap()
        .with_initial(spinbath::dynamics::InitialCondition::Angles { chi: 0.6, phi: 0.0, psi: 0.0, z: None });
    let traj = simulate(&p).unwrap();
    let residual = pathwise_residual(&traj, &p.noise, p.kappa).unwrap();
    // without the corrector the oscillating term stays at O(κ)
    let y = traj.y();
    let raw = y.iter().map(|v| (v - y[0]).abs()).fold(0.0, f64::max);
    eprintln!("residual {residual:e}, raw excursion {raw:e}");
    assert!(residual < p.kappa * p.kappa * 0.1);
    assert!(raw > 10.0 * residual);
}

fn x_samples(noise: &NoiseParams, t: f64, dt: f64, n: u64, seed: u64) -> Vec<f64> {
    let grid: Vec<f64> = (0..=(t / dt).round() as usize).map(|i| i as f64 * dt).collect();
    (0..n)
        .map(|i| {
            let path = sample_path(noise, &grid, seed + i).unwrap();
            time_average_x(&path.times, &path.values, noise, t).unwrap()
        })
        .collect()
}

#[test]
fn time_average_has_zero_mean() {
    let noise = NoiseParams::new(1.0, 0.1).unwrap();
    let xs = x_samples(&noise, 50.0, 0.01, 10_000, 1000);
    let (m, se) = mean_se(&xs);
    assert!(m.abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn time_average_concentrates_like_one_over_t() {
    let noise = NoiseParams::new(2.0, 0.5).unwrap();
    let eps = 0.5;
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for (k, t) in [5.0, 10.0, 20.0, 40.0].into_iter().enumerate() {
        let xs = x_samples(&noise, t, 0.01, 2000, 50_000 * (k as u64 + 1));
        let second = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        let tail = xs.iter().filter(|x| x.abs() > eps).count() as f64 / xs.len() as f64;
        // Chebyshev with the exact variance of the time average
        let g2t = 2.0 * noise.gamma * t;
        let var = 2.0 / (noise.gamma * t) * (1.0 - (1.0 - (-g2t).exp()) / g2t);
        assert!((second - var).abs() < 0.15 * var, "t {t}: {second} vs {var}");
        let bound = var / (eps * eps);
        assert!(tail <= bound);
        lx.push(t.ln());
        ly.push(second.ln());
    }
    let fit = linear_regression(&lx, &ly).unwrap();
    assert!((fit.slope + 1.0).abs() < 0.2, "slope {}", fit.slope);
}

#[test]
fn rescaled_noise_square_root_is_gaussian() {
    // sign(Z)·√(X + 1) with X = 2γZ²/σ² - 1 is the standardized stationary Z
    let noise = NoiseParams::new(1.0, 0.1).unwrap();
    let mut rng = stream_rng(77, 0);
    let n = 10_000;
    let s: Vec<f64> = (0..n)
        .map(|_| {
            let z = sample_stationary(&noise, &mut rng);
            let x = 2.0 * noise.gamma * z * z / noise.sigma.powi(2) - 1.0;
            z.signum() * (x + 1.0).sqrt()
        })
        .collect();
    let (m, _) = mean_se(&s);
    assert!((m * (n as f64).sqrt()).abs() < 3.0);
    let var = s.iter().map(|v| v * v).sum::<f64>() / n as f64;
    assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
}
