use twostep::montecarlo::{generate, generate_with_latent, DgpSpec, Family};

fn selection_rate(seed: u64) -> f64 {
    let spec = DgpSpec::new(Family::AN, 3, 100_000).unwrap();
    let s = generate(&spec, seed);
    s.d.iter().filter(|&&d| d).count() as f64 / s.d.len() as f64
}

#[test]
fn selection_rate_is_interior_and_stable() {
    let rates: Vec<f64> = (0..3).map(|s| selection_rate(100 + s)).collect();
    for r in &rates {
        assert!(*r > 0.05 && *r < 0.95, "{r}");
    }
    let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(hi - lo < 0.01, "{rates:?}");
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn outcome_and_selection_errors_are_positively_correlated() {
    for family in [Family::AN, Family::BN] {
        let spec = DgpSpec::new(family, 3, 50_000).unwrap();
        let (_, latent) = generate_with_latent(&spec, 5);
        let c = correlation(&latent.v, &latent.epsilon);
        assert!(c > 0.0, "{family}: {c}");
    }
}

#[test]
fn generation_is_deterministic_for_every_family() {
    for family in Family::ALL {
        for k in [3, 6] {
            let spec = DgpSpec::new(family, k, 200).unwrap();
            assert_eq!(generate(&spec, 9), generate(&spec, 9));
            assert_ne!(generate(&spec, 9).y, generate(&spec, 10).y);
        }
    }
}
