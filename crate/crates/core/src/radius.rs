//! Certified radius: the per-t equation, its bisection solver, and the
//! end-to-end `certify` procedure.

use serde::{Deserialize, Serialize};

use crate::bounds::{estimate_bounds, prefix_upper_bounds, BoundMethod, ProbabilityBounds};
use crate::error::{invalid, Result};
use crate::smoothing::{
    derive_seed, sample_under_noise, BaseClassifier, CountVector, ExamplePoint, Label, NoiseModel,
};
use crate::special::{std_normal_cdf, std_normal_quantile};

/// Default bisection width.
pub const DEFAULT_MU: f64 = 1e-5;

/// Bisection width used when an (effectively) exact radius is wanted.
pub const EXACT_MU: f64 = 1e-9;

/// The bracket never grows past `BRACKET_CAP_SIGMAS * sigma`.
pub const BRACKET_CAP_SIGMAS: f64 = 100.0;

/// `Phi(Phi^-1(lower) - R/sigma) - Phi(Phi^-1(p_s) + R/sigma) / t`.
///
/// Strictly decreasing in `R` except in the degenerate corners where one
/// of the probabilities is exactly 0 or 1.
pub fn equation_lhs(r: f64, lower: f64, p_s: f64, t: usize, sigma: f64) -> f64 {
    let shift = r / sigma;
    // Infinite quantiles stay infinite after a finite shift, so Phi gives the
    // limit values directly.
    std_normal_cdf(std_normal_quantile(lower) - shift)
        - std_normal_cdf(std_normal_quantile(p_s) + shift) / t as f64
}

/// Whether a per-t root hit the bracket cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Saturation {
    #[default]
    None,
    /// The root lies beyond `+cap`; the value is reported as `cap`.
    Above,
    /// The root lies below `-cap`; the value is reported as `-cap`.
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusSolution {
    /// Lower end of the final bracket: the LHS is non-negative here and the
    /// exact root lies within `mu` above it.
    pub value: f64,
    pub saturation: Saturation,
}

fn check_solver_args(lower: f64, p_s: f64, t: usize, sigma: f64, mu: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lower) {
        return Err(invalid("lower", format!("{lower} is not a probability")));
    }
    if !(0.0..=1.0).contains(&p_s) {
        return Err(invalid("p_s", format!("{p_s} is not a probability")));
    }
    if t == 0 {
        return Err(invalid("t", "must be at least 1"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(
            "sigma",
            format!("must be positive and finite, got {sigma}"),
        ));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(invalid(
            "mu",
            format!("must be positive and finite, got {mu}"),
        ));
    }
    Ok(())
}

/// Solves one per-t equation by bracketed bisection.
///
/// The bracket starts at `[0, sigma]` (or `[-sigma, 0]` when the root is
/// negative) and doubles until it straddles the root, up to
/// `100 * sigma`. Bisection stops once the bracket is narrower than `mu`.
pub fn solve_radius_t(
    lower: f64,
    p_s: f64,
    t: usize,
    sigma: f64,
    mu: f64,
) -> Result<RadiusSolution> {
    check_solver_args(lower, p_s, t, sigma, mu)?;
    let h = |r: f64| equation_lhs(r, lower, p_s, t, sigma);
    let cap = BRACKET_CAP_SIGMAS * sigma;

    // Degenerate corners: the LHS is identically zero, or has a constant
    // sign so the root sits at infinity. Handled up front because the
    // tails underflow to exactly zero long before the cap.
    let saturated = |saturation, value| Ok(RadiusSolution { value, saturation });
    match (lower, p_s) {
        (0.0, 0.0) => return saturated(Saturation::None, 0.0),
        (0.0, _) => return saturated(Saturation::Below, -cap),
        (1.0, _) | (_, 0.0) => return saturated(Saturation::Above, cap),
        _ => {}
    }

    let (mut lo, mut hi);
    if h(0.0) >= 0.0 {
        lo = 0.0;
        hi = sigma.min(cap);
        while h(hi) >= 0.0 {
            if hi >= cap {
                return Ok(RadiusSolution {
                    value: cap,
                    saturation: Saturation::Above,
                });
            }
            lo = hi;
            hi = (2.0 * hi).min(cap);
        }
    } else {
        hi = 0.0;
        lo = -sigma.min(cap);
        while h(lo) < 0.0 {
            if lo <= -cap {
                return Ok(RadiusSolution {
                    value: -cap,
                    saturation: Saturation::Below,
                });
            }
            hi = lo;
            lo = (2.0 * lo).max(-cap);
        }
    }

    while hi - lo >= mu {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RadiusSolution {
        value: lo,
        saturation: Saturation::None,
    })
}

/// Result of certifying one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusCertificate {
    /// `max_t per_t[t].value`. Only meaningful as a certificate when
    /// positive.
    pub radius_lower: f64,
    /// Per-t solutions for `t = 1..=k`.
    pub per_t: Vec<RadiusSolution>,
    /// The `t` (1-based) attaining the maximum. Smallest such `t` on ties.
    pub best_t: usize,
    pub abstained: bool,
    /// True when the maximising solution hit the bracket cap.
    pub saturated: bool,
    pub sigma: f64,
    pub mu: f64,
    /// Competitors `b_1..b_k` used by the prefix bounds.
    pub competitors: Vec<Label>,
    pub lower: f64,
    pub prefix: Vec<f64>,
}

impl RadiusCertificate {
    pub fn k(&self) -> usize {
        self.per_t.len()
    }

    /// The certified radius, or `None` on abstention.
    pub fn radius(&self) -> Option<f64> {
        (!self.abstained).then_some(self.radius_lower)
    }
}

/// Solves the radius equation for already-estimated bounds.
///
/// `seed` only affects which of several tied competitors are reported in
/// [`RadiusCertificate::competitors`]; the radius itself is tie-invariant.
pub fn certify_bounds(
    bounds: &ProbabilityBounds,
    k: usize,
    sigma: f64,
    mu: f64,
    seed: u64,
) -> Result<RadiusCertificate> {
    let prefix = prefix_upper_bounds(bounds, k, seed)?;
    let lower = bounds.lower();
    let per_t = prefix
        .values
        .iter()
        .enumerate()
        .map(|(i, p_s)| solve_radius_t(lower, *p_s, i + 1, sigma, mu))
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, s) in per_t.iter().enumerate() {
        if s.value > per_t[best].value {
            best = i;
        }
    }
    let radius_lower = per_t[best].value;
    Ok(RadiusCertificate {
        radius_lower,
        best_t: best + 1,
        abstained: radius_lower <= 0.0,
        saturated: per_t[best].saturation != Saturation::None,
        per_t,
        sigma,
        mu,
        competitors: prefix.labels,
        lower,
        prefix: prefix.values,
    })
}

/// Radius for exactly known label probabilities, solved to `EXACT_MU`.
pub fn exact_radius(probabilities: &[f64], label: Label, k: usize, sigma: f64) -> Result<f64> {
    if label >= probabilities.len() {
        return Err(crate::CertError::LabelOutOfRange {
            label,
            num_labels: probabilities.len(),
        });
    }
    let others: Vec<f64> = probabilities
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label)
        .map(|(_, p)| *p)
        .collect();
    let bounds = ProbabilityBounds::from_parts(label, probabilities[label], &others)?;
    Ok(certify_bounds(&bounds, k, sigma, EXACT_MU, 0)?.radius_lower)
}

/// Parameters of [`certify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyParams {
    pub k: usize,
    pub noise: NoiseModel,
    pub n: u64,
    pub alpha: f64,
    pub mu: f64,
    pub method: BoundMethod,
    pub seed: u64,
}

impl CertifyParams {
    /// `mu = 1e-5` and SimuEM bounds.
    pub fn new(k: usize, noise: NoiseModel, n: u64, alpha: f64, seed: u64) -> Self {
        Self {
            k,
            noise,
            n,
            alpha,
            mu: DEFAULT_MU,
            method: BoundMethod::SimuEm,
            seed,
        }
    }
}

/// Samples counts, bounds them, and solves for the radius of `label`.
pub fn certify<F: BaseClassifier + ?Sized>(
    f: &F,
    x: &ExamplePoint,
    label: Label,
    params: &CertifyParams,
) -> Result<RadiusCertificate> {
    Ok(certify_with_counts(f, x, label, params)?.0)
}

/// Like [`certify`] but also returns the sampled counts.
pub fn certify_with_counts<F: BaseClassifier + ?Sized>(
    f: &F,
    x: &ExamplePoint,
    label: Label,
    params: &CertifyParams,
) -> Result<(RadiusCertificate, CountVector)> {
    let c = f.num_labels();
    if label >= c {
        return Err(crate::CertError::LabelOutOfRange {
            label,
            num_labels: c,
        });
    }
    if params.k == 0 || params.k >= c {
        return Err(invalid(
            "k",
            format!("must lie in 1..={}, got {}", c - 1, params.k),
        ));
    }
    let counts = sample_under_noise(f, x, params.noise, params.n, derive_seed(params.seed, 0))?;
    let bounds = estimate_bounds(params.method, &counts, label, params.alpha)?;
    let cert = certify_bounds(
        &bounds,
        params.k,
        params.noise.sigma(),
        params.mu,
        derive_seed(params.seed, 1),
    )?;
    Ok((cert, counts))
}
