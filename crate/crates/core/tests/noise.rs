use spinbath::noise::{gaussian, ou_exact_step, sample_path, sample_stationary, stream_rng, NoiseParams, StationaryNoise};
use spinbath::stats::{ks_two_sample, mean_se, variance};

#[test]
fn exact_step_variance_matches_fine_euler_maruyama() {
    let p = NoiseParams::new(1.0, 1.0).unwrap();
    let (dt, n) = (0.1, 100_000);
    let expected = (1.0 - (-0.2f64).exp()) / 2.0;
    let mut rng = stream_rng(1, 0);
    let exact: Vec<f64> = (0..n).map(|_| ou_exact_step(0.0, &p, dt, gaussian(&mut rng))).collect();

    let inner = 1e-4;
    let steps = (dt / inner).round() as usize;
    let mut rng = stream_rng(2, 0);
    let em: Vec<f64> = (0..n)
        .map(|_| {
            let mut z = 0.0;
            for _ in 0..steps {
                z += -p.gamma * z * inner + p.sigma * inner.sqrt() * gaussian(&mut rng);
            }
            z
        })
        .collect();
    let se = expected * (2.0 / n as f64).sqrt();
    for v in [variance(&exact), variance(&em)] {
        assert!((v - expected).abs() < 3.0 * se, "{v} vs {expected}");
    }
}

#[test]
fn one_step_moments_on_log_grid() {
    let n = 40_000;
    for (i, &(gamma, sigma, dt)) in [(0.01, 0.5, 0.001), (0.1, 2.0, 0.1), (1.0, 0.1, 1.0), (10.0, 1.0, 10.0)].iter().enumerate() {
        let p = NoiseParams::new(gamma, sigma).unwrap();
        let z0 = 0.3;
        let mut rng = stream_rng(10, i as u64);
        let xs: Vec<f64> = (0..n).map(|_| p.step(z0, dt, gaussian(&mut rng))).collect();
        let mean = z0 * (-gamma * dt).exp();
        let var = p.stationary_variance() * (1.0 - (-2.0 * gamma * dt).exp());
        let (m, se) = mean_se(&xs);
        assert!((m - mean).abs() < 3.0 * se + 1e-15);
        assert!((variance(&xs) - var).abs() < 3.0 * var * (2.0 / n as f64).sqrt());
    }
}

#[test]
fn stationary_autocovariance_and_variance() {
    let p = NoiseParams::new(1.0, 0.1).unwrap();
    let grid: Vec<f64> = (0..=30).map(|i| i as f64 * 0.1).collect();
    let n = 10_000;
    let paths: Vec<Vec<f64>> = (0..n).map(|s| sample_path(&p, &grid, 100 + s).unwrap().values).collect();
    for (j, &t) in grid.iter().enumerate().step_by(5) {
        let prod: Vec<f64> = paths.iter().map(|v| v[0] * v[j]).collect();
        let (m, se) = mean_se(&prod);
        assert!((m - p.autocovariance(t)).abs() < 3.0 * se, "lag {t}: {m}");
        let marg: Vec<f64> = paths.iter().map(|v| v[j]).collect();
        let var = p.stationary_variance();
        assert!((variance(&marg) - var).abs() < 3.0 * var * (2.0 / n as f64).sqrt());
    }
}

#[test]
fn marginals_invariant_under_grid_refinement() {
    let p = NoiseParams::new(2.0, 0.7).unwrap();
    let coarse: Vec<f64> = (0..=4).map(|i| i as f64 * 0.5).collect();
    let fine: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();
    let n = 10_000;
    let a: Vec<f64> = (0..n).map(|s| *sample_path(&p, &coarse, s).unwrap().values.last().unwrap()).collect();
    let b: Vec<f64> = (0..n).map(|s| *sample_path(&p, &fine, n + s).unwrap().values.last().unwrap()).collect();
    assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.01);
}

#[test]
fn stationary_sampler_trait_matches_free_function() {
    let p = NoiseParams::new(1.5, 0.4).unwrap();
    let (mut r1, mut r2) = (stream_rng(5, 3), stream_rng(5, 3));
    for _ in 0..10 {
        assert_eq!(p.sample_stationary(&mut r1), sample_stationary(&p, &mut r2));
    }
}
