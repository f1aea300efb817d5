//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topkcert::ProbabilityBounds;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Regularized incomplete beta by tanh-sinh quadrature of the density.
/// Shares nothing with the library's continued fraction.
pub fn beta_cdf_quadrature(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if x > 0.5 {
        return 1.0 - beta_cdf_quadrature(1.0 - x, b, a);
    }
    let ln_norm = libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b);
    let h = 1.0 / 512.0;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut sum = 0.0;
    let steps = (6.0 / h) as i64;
    for i in -steps..=steps {
        let s = i as f64 * h;
        let v = half_pi * s.sinh();
        // t = x / (1 + e^{-2v}); 1 - t computed without cancellation.
        let e = (-2.0 * v).exp();
        let t = x / (1.0 + e);
        let one_minus_t = if v > 0.0 {
            (1.0 - x) + x * e / (1.0 + e)
        } else {
            1.0 - t
        };
        if t <= 0.0 || one_minus_t <= 0.0 {
            continue;
        }
        let weight = x * half_pi * h * s.cosh() / (2.0 * v.cosh() * v.cosh());
        let ln_f = (a - 1.0) * t.ln() + (b - 1.0) * one_minus_t.ln() - ln_norm;
        sum += weight * ln_f.exp();
    }
    sum
}

/// Standard normal CDF by a Taylor series of erf for |x| < 3 and a
/// continued fraction beyond.
pub fn normal_cdf_series(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    if z.abs() < 3.0 {
        // erf(z) = 2/sqrt(pi) * sum (-1)^n z^(2n+1) / (n! (2n+1))
        let mut term = z;
        let mut sum = z;
        for n in 1..200 {
            term *= -z * z / n as f64;
            let add = term / (2 * n + 1) as f64;
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        0.5 + sum / std::f64::consts::PI.sqrt()
    } else {
        // erfc(|z|) by Lentz continued fraction.
        let az = z.abs();
        let mut f = az;
        let mut c = az;
        let mut d = 0.0;
        for n in 1..500 {
            let an = n as f64 / 2.0;
            d = az + an * d;
            d = 1.0 / d;
            c = az + an / c;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let erfc = (-az * az).exp() / (f * std::f64::consts::PI.sqrt());
        if z > 0.0 {
            1.0 - 0.5 * erfc
        } else {
            0.5 * erfc
        }
    }
}

/// Smallest-x bisection inverse of a monotone CDF.
pub fn invert_by_bisection(q: f64, mut lo: f64, mut hi: f64, cdf: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Random probability row over `c` labels with one boosted label.
pub fn random_probabilities(rng: &mut impl Rng, c: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..c)
        .map(|_| -rng.random::<f64>().max(1e-300).ln())
        .collect();
    let boosted = rng.random_range(0..c);
    w[boosted] *= 1.0 + 4.0 * rng.random::<f64>();
    let total: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|v| v / total).collect();
    // Force an exact row sum.
    let rest: f64 = p[1..].iter().sum();
    p[0] = 1.0 - rest;
    p
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Labels of the `k` largest entries as a sorted set.
pub fn true_top_k(p: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|a, b| p[*b].total_cmp(&p[*a]));
    let mut top = idx[..k].to_vec();
    top.sort_unstable();
    top
}

/// Random bounds satisfying both feasibility inequalities of the
/// worst-case construction, with a positive radius.
pub fn random_feasible_bounds(
    rng: &mut impl Rng,
    max_c: usize,
    max_k: usize,
) -> (ProbabilityBounds, usize) {
    loop {
        let c = rng.random_range(2..=max_c);
        let k = rng.random_range(1..=max_k.min(c - 1));
        let lower = rng.random_range(0.2..0.95);
        let slack = 1.0 + rng.random::<f64>() * 0.5;
        let raw: Vec<f64> = (0..c - 1).map(|_| rng.random::<f64>() + 0.01).collect();
        let total: f64 = raw.iter().sum();
        let uppers: Vec<f64> = raw
            .iter()
            .map(|r| r / total * (1.0 - lower) * slack)
            .collect();
        let mut sorted = uppers.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let top: f64 = sorted[..k].iter().sum();
        if lower + top > 1.0 || sorted[0] >= lower || uppers.iter().any(|u| *u > 1.0) {
            continue;
        }
        let target = rng.random_range(0..c);
        let bounds = ProbabilityBounds::from_parts(target, lower, &uppers).unwrap();
        return (bounds, k);
    }
}

/// Lower bound on certified accuracy, written out term by term.
pub fn accuracy_bound_oracle(m: u64, y: u64, alpha: f64, rho: f64) -> f64 {
    let m = m as f64;
    let y = y as f64;
    let log_inv_rho = -rho.ln();
    let variance_term = (2.0 * alpha * (1.0 - alpha) * log_inv_rho / m).sqrt();
    let range_term = log_inv_rho / (3.0 * m);
    (y / m - alpha - variance_term - range_term) / (1.0 - alpha)
}
