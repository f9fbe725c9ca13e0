use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use proptest::prelude::*;
use spinbath::harness::interior_points;
use spinbath::noise::stream_rng;
use spinbath::stats::{ks_uniform, ks_uniform_on, mean_se};
use spinbath::su2::{
    angles_to_matrix, angles_to_quaternion, bracket_residuals, control_determinant, control_fields, haar_sample,
    matrix_to_quaternion, quaternion_to_angles, quaternion_to_matrix, verify_brackets, AngleState,
};

#[test]
fn haar_marginals() {
    let mut rng = stream_rng(3, 0);
    let samples: Vec<AngleState> = (0..100_000).map(|_| haar_sample(&mut rng)).collect();
    let rho: Vec<f64> = samples.iter().map(|a| a.chi.sin().powi(2)).collect();
    let (m, se) = mean_se(&rho);
    assert!((m - 0.5).abs() < 3.0 * se);
    let head = &samples[..10_000];
    assert!(ks_uniform(&rho[..10_000]).unwrap().p_value > 0.01);
    let phi: Vec<f64> = head.iter().map(|a| a.phi).collect();
    let psi: Vec<f64> = head.iter().map(|a| a.psi).collect();
    assert!(ks_uniform_on(&phi, 0.0, TAU).unwrap().p_value > 0.01);
    assert!(ks_uniform_on(&psi, 0.0, TAU).unwrap().p_value > 0.01);
    let mut chi: Vec<f64> = samples.iter().map(|a| a.chi).collect();
    chi.sort_by(f64::total_cmp);
    assert!((chi[chi.len() / 2] - FRAC_PI_4).abs() < 0.01);
}

#[test]
fn haar_left_invariance() {
    let g = angles_to_matrix(&AngleState { chi: 0.7, phi: 2.1, psi: 0.4 });
    let mut rng = stream_rng(4, 0);
    let moved: Vec<AngleState> = (0..10_000)
        .map(|_| quaternion_to_angles(&matrix_to_quaternion(&g.mul(&angles_to_matrix(&haar_sample(&mut rng))))))
        .collect();
    let rho: Vec<f64> = moved.iter().map(|a| a.chi.sin().powi(2)).collect();
    assert!(ks_uniform(&rho).unwrap().p_value > 0.01);
    // (φ/2 + ψ, φ/2 - ψ) mod 2π are independent uniform phases under Haar
    let alpha: Vec<f64> = moved.iter().map(|a| (0.5 * a.phi + a.psi).rem_euclid(TAU)).collect();
    assert!(ks_uniform_on(&alpha, 0.0, TAU).unwrap().p_value > 0.01);
}

#[test]
fn brackets_at_random_points() {
    let pts = interior_points(17, 100);
    assert!(verify_brackets(&pts, 1e-5).unwrap() < 1e-6);
}

#[test]
fn bracket_residual_is_second_order() {
    let a = AngleState { chi: 0.6, phi: 1.1, psi: 0.2 };
    let r1 = bracket_residuals(&a, 1e-2).unwrap();
    let r2 = bracket_residuals(&a, 5e-3).unwrap();
    for (x, y) in r1.iter().zip(&r2) {
        if *x > 1e-10 {
            let ratio = x / y;
            assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
        }
    }
}

#[test]
fn determinant_identity() {
    for a in interior_points(18, 100) {
        let det = control_determinant(&a).unwrap();
        assert!((det + 1.0 / (2.0 * a.chi).sin()).abs() < 1e-10);
    }
    let [b0, b1, _] = control_fields(&AngleState { chi: FRAC_PI_4, phi: 0.0, psi: 3.0 }).unwrap();
    assert_eq!(b0, [0.0, 1.0, 0.0]);
    assert!((b1[0]).abs() < 1e-15 && b1[1].abs() < 1e-15 && (b1[2] + 1.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn angle_and_quaternion_maps_agree(chi in 0.0..FRAC_PI_2, phi in 0.0..TAU, psi in 0.0..TAU) {
        let a = AngleState { chi, phi, psi };
        let u = angles_to_matrix(&a);
        let v = quaternion_to_matrix(&angles_to_quaternion(&a)).unwrap();
        prop_assert!(u.distance(&v) < 1e-12);
        prop_assert!(u.unitarity_defect() < 1e-12);
        prop_assert!((u.det() - 1.0).norm() < 1e-12);
        let back = angles_to_matrix(&quaternion_to_angles(&angles_to_quaternion(&a)));
        prop_assert!(back.distance(&u) < 1e-12);
    }
}
