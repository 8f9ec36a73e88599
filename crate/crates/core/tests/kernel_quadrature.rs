mod common;

use common::simpson;
use twostep::Kernel;

const K: Kernel = Kernel::Quartic;

#[test]
fn kernel_integrates_to_one() {
    assert!((simpson(|u| K.eval(u), -1.0, 1.0, 2000) - 1.0).abs() < 1e-8);
    for &(c, h) in &[(0.0, 0.5), (0.3, 0.1), (-2.0, 3.0)] {
        let mass = simpson(|u| K.eval_scaled(u - c, h).unwrap(), c - h, c + h, 4000);
        assert!((mass - 1.0).abs() < 1e-8, "c={c} h={h}: {mass}");
    }
}

#[test]
fn kernel_moments() {
    let first = simpson(|u| u * K.eval(u), -1.0, 1.0, 2000);
    let second = simpson(|u| u * u * K.eval(u), -1.0, 1.0, 2000);
    assert!(first.abs() < 1e-12);
    assert!((second - 1.0 / 7.0).abs() < 1e-10);
}

#[test]
fn cdf_matches_quadrature() {
    for i in 0..=40 {
        let t = -1.0 + i as f64 * 0.05;
        let q = simpson(|u| K.eval(u), -1.0, t, 2000);
        assert!((K.cdf(t) - q).abs() < 1e-10, "t={t}");
    }
}

#[test]
fn derivatives_match_finite_differences() {
    let eps = 1e-5;
    for i in 0..100 {
        let u = -0.99 + 1.98 * i as f64 / 99.0;
        let (d1, d2) = K.eval_derivatives(u);
        let fd1 = (K.eval(u + eps) - K.eval(u - eps)) / (2.0 * eps);
        let fd2 = (K.eval(u + eps) - 2.0 * K.eval(u) + K.eval(u - eps)) / (eps * eps);
        assert!((d1 - fd1).abs() < 1e-7, "K'({u})");
        assert!((d2 - fd2).abs() < 1e-4, "K''({u})");
    }
}
