use num_complex::Complex64;
use rayon::prelude::*;

use sampnum_core::concentration::{
    certify_frame, check_condition, monte_carlo_certify, smallest_n, tail_deviation,
};
use sampnum_core::density::SamplingDensity;
use sampnum_core::leastsq::{build_matrix, operator_norm_bounds, pseudo_inverse_in_frame_range};
use sampnum_core::linalg::{self, CMat};
use sampnum_core::pipeline::{default_truncation, error_basis};
use sampnum_core::spectrum::{enumerate_spectrum, KernelModel};

fn three_se(p: f64, trials: usize) -> f64 {
    3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

#[test]
fn failure_frequency_at_m8_respects_the_bound() {
    let model = KernelModel::torus(1, 1.0).unwrap();
    let (m, r) = (8, 2.0);
    // N(m) = m - 1 on the torus; the smallest n meeting the condition.
    let n = smallest_n(m - 1, 10.0 * r).unwrap();
    assert!(check_condition(m, n, r, (m - 1) as f64).unwrap());
    let basis = enumerate_spectrum(&model, m - 1).unwrap();
    let density = SamplingDensity::new(&basis, m).unwrap();
    let trials = 2000;
    let certs = monte_carlo_certify(&density, n, r, trials, 41).unwrap();
    let failures = certs.iter().filter(|c| !c.passed).count();
    let p = 2.0 / (n as f64).powf(r - 1.0);
    assert!(failures as f64 / trials as f64 <= p + three_se(p, trials));
    assert!(certs.iter().all(|c| c.condition_ok && c.eigen_min >= 0.0));
}

#[test]
fn legendre_failure_frequency_with_spectral_function() {
    let model = KernelModel::legendre((1..=20).map(|k| 1.0 / k as f64).collect()).unwrap();
    let basis = enumerate_spectrum(&model, 20).unwrap();
    let (m, r) = (4, 2.0);
    let big_n = basis.spectral_function_n(m).unwrap();
    let mut n = m;
    while !check_condition(m, n, r, big_n).unwrap() {
        n += 1;
    }
    let density = SamplingDensity::new(&basis, m).unwrap();
    let trials = 1000;
    let certs = monte_carlo_certify(&density, n, r, trials, 5).unwrap();
    let failures = certs.iter().filter(|c| !c.passed).count();
    let p = 2.0 / n as f64;
    assert!(failures as f64 / trials as f64 <= p + three_se(p, trials));
}

#[test]
fn tail_deviation_frequency_respects_the_bound() {
    let model = KernelModel::torus(1, 1.0).unwrap();
    let (m, n, r, trials) = (4, 1000, 2.0, 200);
    let m_trunc = default_truncation(&model, m).unwrap();
    let basis = error_basis(&model, m_trunc).unwrap();
    let density = SamplingDensity::new(&basis, m).unwrap();
    let reports: Vec<_> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let nodes = density.draw_nodes_stream(n, 77, t).unwrap();
            tail_deviation(&density, &nodes, m_trunc, r).unwrap()
        })
        .collect();
    // Counting every report that is not provably below F is conservative.
    let exceed = reports.iter().filter(|r| !r.below_threshold()).count();
    let p = 2f64.powf(0.75) * (n as f64).powf(1.0 - r);
    assert!(exceed as f64 / trials as f64 <= p + three_se(p, trials));
    for rep in &reports {
        assert_eq!(rep.lambda_norm, basis.lambda(m));
        assert!(rep.truncation_uncertainty < rep.bound_f);
    }
}

#[test]
fn average_gram_converges_to_identity() {
    let trials = 10_000;
    let tolerance = 5.0 / (trials as f64).sqrt();
    let legendre = KernelModel::legendre((1..=12).map(|k| 0.8f64.powi(k)).collect()).unwrap();
    let torus = KernelModel::torus(2, 1.0).unwrap();
    for (model, m, n) in [(legendre, 6, 10), (torus, 8, 10)] {
        let basis = enumerate_spectrum(&model, 12).unwrap();
        let density = SamplingDensity::new(&basis, m).unwrap();
        let sum = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let nodes = density.draw_nodes_stream(n, 3, t).unwrap();
                let l = build_matrix(&basis, &nodes, m, true).unwrap();
                let mut h = linalg::gram(&l.entries);
                h /= Complex64::new(n as f64, 0.0);
                h
            })
            .reduce(|| CMat::zeros(m - 1, m - 1), |a, b| a + b);
        let avg = sum / Complex64::new(trials as f64, 0.0);
        for i in 0..m - 1 {
            for j in 0..m - 1 {
                let want = if i == j { 1.0 } else { 0.0 };
                let err = (avg[(i, j)] - Complex64::new(want, 0.0)).norm();
                assert!(err <= tolerance, "{model:?} ({i}, {j}): {err}");
            }
        }
    }
}

#[test]
fn passed_flag_agrees_with_the_bracket_and_pseudo_inverse() {
    let model = KernelModel::torus(1, 1.0).unwrap();
    let m = 8;
    let basis = enumerate_spectrum(&model, m - 1).unwrap();
    let density = SamplingDensity::new(&basis, m).unwrap();
    let (mut passed, mut failed) = (0, 0);
    for (t, n) in (0..400u64).zip([12usize, 20, 40, 80].into_iter().cycle()) {
        let nodes = density.draw_nodes_stream(n, 8, t).unwrap();
        let l = build_matrix(&basis, &nodes, m, true).unwrap();
        let cert = certify_frame(&l, 2.0, (m - 1) as f64);
        assert!(cert.eigen_min >= 0.0);

        // Rayleigh quotients of (1/n) |L w|^2 are the eigenvalues of H_m.
        let sv = linalg::singular_values(&l.entries);
        let lo = sv.iter().copied().fold(f64::INFINITY, f64::min).powi(2) / n as f64;
        let hi = sv.iter().copied().fold(0.0, f64::max).powi(2) / n as f64;
        assert_eq!(cert.passed, lo > 0.5 && hi < 1.5, "trial {t}");
        assert!((lo - cert.eigen_min).abs() < 1e-10 && (hi - cert.eigen_max).abs() < 1e-10);

        if cert.passed {
            passed += 1;
            let (_, pinv) = operator_norm_bounds(&l).unwrap();
            assert!(pseudo_inverse_in_frame_range(pinv, n));
        } else {
            failed += 1;
            if cert.eigen_min <= 0.5 && cert.eigen_min > 0.0 {
                let pinv = 1.0 / (cert.eigen_min * n as f64).sqrt();
                assert!(!pseudo_inverse_in_frame_range(pinv * (1.0 + 1e-9), n));
            }
        }
    }
    assert!(passed > 0 && failed > 0, "both outcomes should occur");
}
