//! One PASS/FAIL line per acceptance criterion; exits non-zero on any failure.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use spinbath::averaging::{compare_with_effective, homological_residual, relaxation_time};
use spinbath::dynamics::{ensemble_mean_rho, final_states, simulate, transition_probability, InitialCondition, SimParams};
use spinbath::fpt::{fpt_ensemble, start_at};
use spinbath::harness::interior_points;
use spinbath::spectral::{
    build_generator, gap_scaling_study, generator_spectrum, perturbative_gap, perturbative_real_part, spectrum,
    GalerkinSpec,
};
use spinbath::stats::{ks_uniform, mean_se, relaxation_fit};
use spinbath::su2::{bracket_residuals, control_determinant, quaternion_to_matrix, UnitaryMatrix};
use spinbath::Result;

type Criterion = (&'static str, fn() -> Result<Outcome>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn haar_stationarity() -> Result<Outcome> {
    let p = SimParams::new(1.0, 1.0, 0.1, 1e-3, 100.0, 1)?.with_initial(InitialCondition::Haar);
    let rho: Vec<f64> = final_states(&p, 2000)?.iter().map(|(_, q)| transition_probability(q)).collect();
    let ks = ks_uniform(&rho)?;
    let (mean, se) = mean_se(&rho);
    Ok(Outcome {
        passed: ks.p_value > 0.01 && (mean - 0.5).abs() < 0.02,
        detail: format!("KS p = {:.3}, mean rho = {mean:.4} ± {se:.4}", ks.p_value),
    })
}

fn relaxation_rate() -> Result<Outcome> {
    let p = SimParams::new(1.0, 1.0, 0.1, 0.05, 1000.0, 2)?.with_stride(200);
    let ens = ensemble_mean_rho(&p, 1000)?;
    let fit = relaxation_fit(&ens.times, &ens.mean)?;
    let rt = fit.rate * relaxation_time(1.0, 0.1);
    Ok(Outcome {
        passed: (0.05..=20.0).contains(&rt) && fit.r_squared > 0.9,
        detail: format!("r T* = {rt:.3}, R² = {:.4} over {} points", fit.r_squared, fit.n_points),
    })
}

fn gap_scaling() -> Result<Outcome> {
    let spec = GalerkinSpec::default();
    let rows = gap_scaling_study(&[0.25, 1.0, 4.0], 0.05, &spec)?;
    let lo = rows.iter().map(|r| r.gap_times_tstar).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.gap_times_tstar).fold(0.0, f64::max);
    let galerkin = generator_spectrum(&spec, 1.0, 1.0, 0.01)?.gap;
    let pert = perturbative_gap(&spec, 1.0, 0.01)?;
    let rel = (galerkin - pert).abs() / galerkin;
    let diag = (-(spec.k_max as i64 - 1)..spec.k_max as i64)
        .flat_map(|k| (-(spec.p_max as i64)..=spec.p_max as i64).map(move |p| (p, k)))
        .filter(|&pk| pk != (0, 0))
        .map(|(p, k)| -perturbative_real_part(p, k, 0, spec.p_max, 1.0, 0.01).value)
        .fold(f64::INFINITY, f64::min);
    let band: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.gap_times_tstar)).collect();
    Ok(Outcome {
        passed: hi / lo < 4.0 && rel < 0.1,
        detail: format!(
            "gap T* = [{}] (band {:.2}); kappa sigma 0.01: Galerkin {galerkin:.5e}, perturbative {pert:.5e} (rel {rel:.1e}), diagonal {diag:.5e}",
            band.join(", "),
            hi / lo
        ),
    })
}

fn uncoupled_exactness() -> Result<Outcome> {
    let p = SimParams::new(1.0, 0.0, 0.1, 1e-3, 100.0, 4)?.with_stride(100);
    let traj = simulate(&p)?;
    let mut worst: f64 = 0.0;
    for (t, q) in traj.times.iter().zip(&traj.states) {
        let d = UnitaryMatrix([
            [Complex64::from_polar(1.0, -0.5 * t), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, 0.5 * t)],
        ]);
        worst = worst.max(quaternion_to_matrix(q)?.distance(&d));
    }
    let spec = GalerkinSpec::new(4, 4, 4);
    let gamma = 1.5;
    let eig = spectrum(&build_generator(&spec, gamma, 0.0, 0.1)?, None)?.eigenvalues;
    let eig_err = eig
        .iter()
        .map(|z| {
            let n = (-z.re / gamma).round().clamp(0.0, spec.n_max as f64);
            let k = z.im.round().clamp(-(spec.k_max as f64), spec.k_max as f64);
            (z - Complex64::new(-n * gamma, k)).norm()
        })
        .fold(0.0, f64::max);
    Ok(Outcome {
        passed: worst < 1e-8 && eig_err < 1e-10 && eig.len() == spec.dim(),
        detail: format!("trajectory error {worst:.2e}, eigenvalue error {eig_err:.2e} over {} modes", eig.len()),
    })
}

fn fpt_scaling() -> Result<Outcome> {
    let run = |sigma: f64, seed: u64| {
        let t = 20.0 * relaxation_time(1.0, sigma);
        fpt_ensemble(&SimParams::new(1.0, 1.0, sigma, 0.1, t, seed)?, 0.0, 500)
    };
    let (a, b) = (run(0.1, 5)?, run(0.03, 6)?);
    let ratio = b.mean / a.mean;
    let expected = relaxation_time(1.0, 0.03) / relaxation_time(1.0, 0.1);
    let r2 = [&a, &b].map(|r| r.tail.map_or(0.0, |t| t.r_squared));
    let within = ratio / expected < 2.0 && expected / ratio < 2.0;
    Ok(Outcome {
        passed: within && r2.iter().all(|&r| r > 0.9) && !a.mean_is_lower_bound && !b.mean_is_lower_bound,
        detail: format!(
            "E[tau(0)] = {:.1} and {:.1}, ratio {ratio:.2} vs {expected:.2}; tail R² = {:.3}, {:.3}",
            a.mean, b.mean, r2[0], r2[1]
        ),
    })
}

fn averaging_fidelity() -> Result<Outcome> {
    let tstar = relaxation_time(1.0, 0.05);
    let p = SimParams::new(1.0, 1.0, 0.05, 0.05, tstar, 7)?.with_initial(start_at(0.5, 0.0));
    let cmp = compare_with_effective(&p, 2000, 1e-3)?;
    let d = cmp.ks.statistic;
    Ok(Outcome {
        passed: d < 0.1,
        detail: format!("KS distance {d:.4} at t = {tstar} (rescaled {:.2})", cmp.rescaled_time),
    })
}

fn structural_identities() -> Result<Outcome> {
    let points = interior_points(8, 100);
    let (mut br, mut det, mut hom): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for (i, a) in points.iter().enumerate() {
        br = br.max(bracket_residuals(a, 2e-6)?.into_iter().fold(0.0, f64::max));
        det = det.max((control_determinant(a)? + 1.0 / (2.0 * a.chi).sin()).abs());
        let z = (i as f64 / 50.0 - 1.0) * 0.2;
        hom = hom.max(homological_residual(z, -(2.0 * a.chi).cos(), a.phi, 1.0, 1e-5).abs());
    }
    let drift = simulate(&SimParams::new(1.0, 1.0, 0.1, 1e-3, 100.0, 9)?.with_stride(1000))?.norm_drift_rate;
    Ok(Outcome {
        passed: br < 1e-6 && det < 1e-10 && hom < 1e-6 && drift < 1e-9,
        detail: format!("brackets {br:.1e}, determinant {det:.1e}, homological {hom:.1e}, norm drift {drift:.1e}/time"),
    })
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("Haar stationarity", haar_stationarity),
        ("relaxation rate", relaxation_rate),
        ("spectral gap scaling", gap_scaling),
        ("uncoupled exactness", uncoupled_exactness),
        ("first-passage scaling", fpt_scaling),
        ("averaging fidelity", averaging_fidelity),
        ("structural identities", structural_identities),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (tag, detail) = match f() {
            Ok(o) => (if o.passed { "PASS" } else { "FAIL" }, o.detail),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} criterion {}: {name}: {detail} [{:.1}s]", i + 1, start.elapsed().as_secs_f64());
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
