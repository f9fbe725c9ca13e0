use spinbath::averaging::relaxation_time;
use spinbath::dynamics::SimParams;
use spinbath::fpt::{
    exit_ensemble, fpt_ensemble, fpt_ensemble_levels, nested_renewal_experiment, path_passages,
    start_at, survival_probe, z_excursion_time, z_return_time, DomainSpec, ExitSide,
};
use spinbath::noise::NoiseParams;
use spinbath::spectral::{generator_spectrum, GalerkinSpec};
use spinbath::stats::{linear_regression, mean_se};

fn fig2_params(t_final: f64, seed: u64) -> SimParams {
    SimParams::new(1.0, 1.0, 0.1, 0.1, t_final, seed).unwrap()
}

#[test]
fn passages_monotone_in_level_and_horizon() {
    let levels = [-0.5, 0.0, 0.5, 0.9];
    let short = fig2_params(300.0, 5);
    let long = fig2_params(900.0, 5);
    for path in 0..40 {
        let a = path_passages(&short, path, &levels).unwrap();
        let b = path_passages(&long, path, &levels).unwrap();
        for w in a.windows(2) {
            assert!(w[0].time <= w[1].time || w[1].censored);
        }
        for (x, y) in a.iter().zip(&b) {
            if !x.censored {
                assert_eq!(x.time, y.time);
            }
        }
    }
}

#[test]
fn mean_passage_of_order_tstar_and_e_of_y() {
    let tstar = relaxation_time(1.0, 0.1);
    let levels = [0.0, 0.5, 0.9, 0.99];
    let res = fpt_ensemble_levels(&fig2_params(20.0 * tstar, 11), &levels, 400).unwrap();
    let e: Vec<f64> = res.iter().map(|r| r.mean / tstar).collect();
    eprintln!("e(y) = {e:?}, censored {:?}", res.iter().map(|r| r.censored_fraction).collect::<Vec<_>>());
    assert!((0.05..=20.0).contains(&e[0]));
    for w in e.windows(2) {
        assert!(w[1] > w[0]);
    }
    let tail = res[2].tail.unwrap();
    let gap = generator_spectrum(&GalerkinSpec::default(), 1.0, 1.0, 0.1).unwrap().gap;
    eprintln!("tail rate {} r2 {} gap {gap}", tail.rate, tail.r_squared);
    assert!(tail.r_squared > 0.9);
    assert!(tail.rate / gap < 10.0 && gap / tail.rate < 10.0);
}

#[test]
fn nested_renewal_matches_direct() {
    let p = fig2_params(4000.0, 21);
    let exp = nested_renewal_experiment(&p, -0.5, -0.9, 0.0, 500).unwrap();
    eprintln!("{exp:?}");
    assert_eq!(exp.censored, 0);
    assert!((exp.composed - exp.direct).abs() / exp.direct < 0.25);
    assert!(exp.bound >= exp.direct);
}

#[test]
fn survival_probe_properties() {
    let base = fig2_params(100.0, 31);
    let domain = DomainSpec::new(-1.0, 0.0, 1.0).unwrap();
    let tiny = survival_probe(&base, &domain, 0.1, 20).unwrap();
    assert!(tiny.q > 0.95);

    let t = 60.0;
    let probe = survival_probe(&base, &domain, t, 200).unwrap();
    eprintln!("q({t}) = {} at z0 {} y0 {}", probe.q, probe.worst_z0, probe.worst_y0);
    let bound = probe.mean_bound.unwrap();

    // chained survival and the implied mean bound from the worst start
    let worst = base.with_initial(start_at(probe.worst_y0, probe.worst_z0)).with_t_final(4000.0);
    let exits = exit_ensemble(&worst, &domain, 400).unwrap();
    assert!(exits.iter().all(|e| e.side != ExitSide::Censored));
    for k in [2.0, 3.0] {
        let alive = exits.iter().filter(|e| e.time > k * t).count() as f64 / exits.len() as f64;
        let se = (probe.q.powf(k) * (1.0 - probe.q.powf(k)) / exits.len() as f64).sqrt();
        eprintln!("P(tau > {k}T) = {alive}, q^{k} = {}", probe.q.powf(k));
        assert!(alive <= probe.q.powf(k) + 3.0 * se + 0.01);
    }
    let (mean, _) = mean_se(&exits.iter().map(|e| e.time).collect::<Vec<_>>());
    eprintln!("mean exit {mean}, bound {bound}");
    assert!(bound >= mean);
}

#[test]
fn fpt_scales_with_tstar() {
    let n = 500;
    let a = fpt_ensemble(&SimParams::new(1.0, 1.0, 0.1, 0.1, 20.0 * relaxation_time(1.0, 0.1), 41).unwrap(), 0.0, n).unwrap();
    let b = fpt_ensemble(&SimParams::new(1.0, 1.0, 0.03, 0.1, 20.0 * relaxation_time(1.0, 0.03), 42).unwrap(), 0.0, n).unwrap();
    let ratio = b.mean / a.mean;
    let expected = relaxation_time(1.0, 0.03) / relaxation_time(1.0, 0.1);
    eprintln!("means {} {} ratio {ratio} expected {expected}", a.mean, b.mean);
    assert!(ratio / expected < 2.0 && expected / ratio < 2.0);
    for r in [&a, &b] {
        assert!(!r.mean_is_lower_bound);
        assert!(r.tail.unwrap().r_squared > 0.9);
    }
}

#[test]
fn ou_excursions_follow_arrhenius() {
    let sigmas = [0.3, 0.25, 0.2];
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, &s) in sigmas.iter().enumerate() {
        let noise = NoiseParams::new(1.0, s).unwrap();
        let h = z_excursion_time(&noise, 0.5, 0.01, 1e5, 400, 50 + i as u64).unwrap();
        eprintln!("sigma {s}: mean {} censored {}", h.mean, h.censored);
        assert_eq!(h.censored, 0);
        x.push(1.0 / (s * s));
        y.push(h.mean.ln());
    }
    let fit = linear_regression(&x, &y).unwrap();
    assert!(fit.slope > 0.0 && fit.r_squared > 0.9);
}

#[test]
fn ou_returns_to_zero_in_order_one_over_gamma() {
    for gamma in [0.5, 1.0, 4.0] {
        let noise = NoiseParams::new(gamma, 0.1).unwrap();
        let h = z_return_time(&noise, noise.stationary_std(), 0.001, 100.0 / gamma, 2000, 7).unwrap();
        assert!((0.05..=20.0).contains(&(h.mean * gamma)), "γ={gamma}: {}", h.mean);
    }
}
