mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twostep::rank::{ranks, IndexValues, RankValues};
use twostep::snn::{snn_fit, snn_fit_at, xi_boundary};
use twostep::Kernel;

#[test]
fn fast_paths_match_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let cfg = common::random_snn_config(&mut rng);
        let err = common::snn_oracle_gap(&cfg);
        assert!(err <= 1e-12, "max deviation {err:e} at n = {}", cfg.v.len());
    }
}

#[test]
fn grid_and_general_paths_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 150;
    let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let u = ranks(&IndexValues::new(v).unwrap());
    assert!(u.is_tie_free());
    let raw = RankValues::from_raw(u.u.clone()).unwrap();
    for &h in &[0.03, 0.2, 1.0] {
        let a = snn_fit(&u, &w, None, h, Kernel::Quartic, false).unwrap();
        let b = snn_fit(&raw, &w, None, h, Kernel::Quartic, false).unwrap();
        let c = snn_fit_at(&u, &w, None, h, Kernel::Quartic, &u.u).unwrap();
        for k in 0..n {
            assert!((a.fitted[k] - b.fitted[k]).abs() < 1e-12);
            assert!((a.fitted[k] - c.fitted[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn wide_bandwidth_center_point_matches_double_loop() {
    // Uniform spacing, symmetric design, h spanning every point.
    let n = 41;
    let u: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let w: Vec<f64> = u.iter().map(|t| (t - 0.5).powi(2) + t).collect();
    let ranks = RankValues::from_raw(u.clone()).unwrap();
    let fit = snn_fit(&ranks, &w, None, 1.5, Kernel::Quartic, false).unwrap();
    let oracle = common::naive_snn(&u, &w, None, 1.5, false);
    assert!((fit.fitted[20] - oracle[20].unwrap()).abs() < 1e-12);
}

#[test]
fn boundary_mass_matches_quadrature() {
    // u = 0.05, h = 0.1: mass over [-0.5, 1].
    let q = common::simpson(common::quartic, -0.5, 1.0, 4000);
    assert!((xi_boundary(0.05, 0.1, Kernel::Quartic) - q).abs() < 1e-12);
    let half = 0.5 + common::simpson(common::quartic, 0.0, 0.5, 4000);
    assert!((q - half).abs() < 1e-12);
}

#[test]
fn fit_error_shrinks_with_sample_size() {
    let m = |t: f64| (2.0 * std::f64::consts::PI * t).sin();
    let mut errs = Vec::new();
    for &n in &[200usize, 800, 3200] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let u = ranks(&IndexValues::new(v.clone()).unwrap());
        let w: Vec<f64> = v.iter().map(|&t| m(t) + 0.5 * (rng.random::<f64>() - 0.5)).collect();
        let (lo, hi) = twostep::snn::default_bandwidth_bounds(n).unwrap();
        let fit = snn_fit(&u, &w, None, 0.5 * (lo + hi), Kernel::Quartic, false).unwrap();
        let mse = (0..n).map(|i| (fit.fitted[i] - m(v[i])).powi(2)).sum::<f64>() / n as f64;
        errs.push(mse);
    }
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}
