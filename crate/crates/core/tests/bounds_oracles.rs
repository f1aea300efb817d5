mod common;

use common::{beta_cdf_quadrature, invert_by_bisection, random_probabilities, rng};
use proptest::prelude::*;
use topkcert::{
    binocp_bounds, prefix_upper_bounds, sample_under_noise, simuem_bounds, CountVector,
    ExamplePoint, NoiseModel, ProbabilityBounds, SyntheticTabularClassifier,
};

#[test]
fn binocp_lower_against_quadrature() {
    let counts = CountVector::new(vec![900, 100]).unwrap();
    let got = binocp_bounds(&counts, 0, 0.001).unwrap().lower();
    let oracle = invert_by_bisection(0.001, 0.0, 1.0, |x| beta_cdf_quadrature(x, 900.0, 101.0));
    assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
}

#[test]
fn simuem_upper_against_quadrature() {
    let counts = CountVector::new(vec![700, 250, 50]).unwrap();
    let b = simuem_bounds(&counts, 0, 0.01).unwrap();
    let level = 1.0 - 0.01 / 3.0;
    let oracle = invert_by_bisection(level, 0.0, 1.0, |x| beta_cdf_quadrature(x, 51.0, 950.0));
    assert!((b.upper(2).unwrap() - oracle).abs() < 1e-8);
}

/// A smaller version of the coverage experiment; the acceptance suite runs
/// the full-size one.
#[test]
fn coverage_smoke() {
    let mut r = rng(11);
    let alpha = 0.05;
    let runs = 400;
    let noise = NoiseModel::new(0.5).unwrap();
    let x = ExamplePoint::zeros(1).unwrap();
    let mut violations = 0;
    for run in 0..runs {
        let p = random_probabilities(&mut r, 5);
        let f = SyntheticTabularClassifier::new(p.clone(), 1, run).unwrap();
        let counts = sample_under_noise(&f, &x, noise, 500, run).unwrap();
        let b = simuem_bounds(&counts, 0, alpha).unwrap();
        let bad = b.lower() > p[0] || b.competitors().any(|(i, u)| u < p[i]);
        violations += usize::from(bad);
    }
    let tol = alpha + 3.0 * (alpha * (1.0 - alpha) / runs as f64).sqrt();
    assert!(violations as f64 / runs as f64 <= tol, "{violations}");
}

proptest! {
    #[test]
    fn prefix_bounds_non_decreasing_and_capped(
        lower in 0.0f64..1.0,
        uppers in prop::collection::vec(0.0f64..1.0, 1..12),
        k_frac in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let k = 1 + ((uppers.len() - 1) as f64 * k_frac) as usize;
        let b = ProbabilityBounds::from_parts(0, lower, &uppers).unwrap();
        let p = prefix_upper_bounds(&b, k, seed).unwrap();
        prop_assert_eq!(p.values.len(), k);
        prop_assert!(p.values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(p.values.iter().all(|v| *v <= 1.0 - lower));
        prop_assert!(p.uppers.windows(2).all(|w| w[0] <= w[1]));
    }
}
