mod common;

use common::{beta_cdf_quadrature, invert_by_bisection, normal_cdf_series};
use proptest::prelude::*;
use topkcert::{beta_quantile, binom_two_sided_pvalue, std_normal_cdf, std_normal_quantile};

#[test]
fn quadrature_oracle_sanity() {
    // Closed forms: Beta(1,1) is uniform, Beta(3,1) has CDF x^3.
    assert!((beta_cdf_quadrature(0.3, 1.0, 1.0) - 0.3).abs() < 1e-13);
    assert!((beta_cdf_quadrature(0.7, 3.0, 1.0) - 0.343).abs() < 1e-13);
    assert!(
        (beta_cdf_quadrature(0.2, 0.5, 0.5) - (2.0 / std::f64::consts::PI) * 0.2f64.sqrt().asin())
            .abs()
            < 1e-10
    );
}

#[test]
fn normal_cdf_matches_series() {
    for i in -80..=80 {
        let x = i as f64 * 0.1;
        let oracle = normal_cdf_series(x);
        assert!((std_normal_cdf(x) - oracle).abs() <= 1e-12, "x={x}");
    }
    assert!((std_normal_cdf(1.96) - 0.975_002_1).abs() < 1e-6);
}

#[test]
fn normal_quantile_matches_bisection() {
    let q = invert_by_bisection(0.975, -10.0, 10.0, normal_cdf_series);
    assert!((std_normal_quantile(0.975) - q).abs() < 1e-9);
    assert!((std_normal_quantile(0.975) - 1.959_964).abs() < 1e-5);
}

#[test]
fn beta_quantile_small_shapes_against_oracle() {
    let x = beta_quantile(0.025, 5.0, 6.0).unwrap();
    let oracle = invert_by_bisection(0.025, 0.0, 1.0, |t| beta_cdf_quadrature(t, 5.0, 6.0));
    assert!((x - oracle).abs() < 1e-8, "{x} vs {oracle}");
}

/// Exact p-values by integer pmf enumeration for moderate n.
#[test]
fn pvalue_against_integer_enumeration() {
    for n in [1u64, 2, 7, 10, 31, 60] {
        let choose: Vec<u128> = (0..=n)
            .scan(1u128, |c, i| {
                let out = *c;
                *c = *c * (n - i) as u128 / (i + 1) as u128;
                Some(out)
            })
            .collect();
        let denom = 2f64.powi(n as i32);
        for s in 0..=n {
            let observed = choose[s as usize];
            let tail: u128 = choose.iter().filter(|c| **c <= observed).sum();
            let oracle = (tail as f64 / denom).min(1.0);
            let got = binom_two_sided_pvalue(s, n, 0.5).unwrap();
            assert!(
                (got - oracle).abs() <= 1e-12 * oracle.max(1e-300) + 1e-15,
                "s={s} n={n}"
            );
        }
    }
    assert!((binom_two_sided_pvalue(8, 10, 0.5).unwrap() - 0.109_375).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beta_quantile_consistent_with_quadrature(
        a in 0.5f64..200.0,
        b in 0.5f64..200.0,
        q in 0.001f64..0.999,
    ) {
        let x = beta_quantile(q, a, b).unwrap();
        let oracle = beta_cdf_quadrature(x, a, b);
        prop_assert!((oracle - q).abs() <= 1e-8, "a={} b={} q={} x={} I={}", a, b, q, x, oracle);
    }

    #[test]
    fn normal_round_trip(p in 1e-9f64..(1.0 - 1e-9)) {
        prop_assert!((std_normal_cdf(std_normal_quantile(p)) - p).abs() <= 1e-10);
    }
}

#[test]
fn normal_round_trip_ten_thousand_points() {
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        let p = 1e-9 + (1.0 - 2e-9) * (i as f64 + 0.5) / 10_000.0;
        worst = worst.max((std_normal_cdf(std_normal_quantile(p)) - p).abs());
    }
    assert!(worst <= 1e-10, "{worst}");
}
