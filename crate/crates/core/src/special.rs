//! Scalar special functions: the standard normal CDF and quantile, the
//! regularized incomplete beta function with its inverse, and the exact
//! two-sided binomial test.
//!
//! Quantiles of exactly 0 and 1 map to `-inf` and `+inf` and are carried
//! through downstream arithmetic as infinities rather than clamped.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(invalid("probability", format!("{value} is not in [0, 1]")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = crate::CertError;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, `Phi(x)`. Total on the extended reals; NaN in, NaN out.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal quantile, `Phi^-1(p)`.
///
/// Wichura's AS 241 rational approximation followed by one Newton step
/// against [`std_normal_cdf`]. The upper half is computed by reflection so
/// the Newton correction always runs in the accurate lower tail.
/// Returns NaN for `p` outside `[0, 1]`.
pub fn std_normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        // 1 - p is exact for p in (0.5, 1).
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

fn lower_quantile(p: f64) -> f64 {
    let x = as241(p);
    let density = std_normal_pdf(x);
    if density > 0.0 && density.is_finite() {
        let step = (std_normal_cdf(x) - p) / density;
        if step.is_finite() {
            return x - step;
        }
    }
    x
}

fn as241(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }

    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_8e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Stirling-series remainder `ln Gamma(x) - [(x - 1/2) ln x - x + ln sqrt(2 pi)]`
/// for `x >= 10`.
fn lgamma_correction(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    inv * (1.0 / 12.0
        - inv2
            * (1.0 / 360.0
                - inv2
                    * (1.0 / 1260.0
                        - inv2
                            * (1.0 / 1680.0
                                - inv2
                                    * (1.0 / 1188.0 - inv2 * (691.0 / 360_360.0 - inv2 / 156.0))))))
}

/// `ln B(a, b)`, avoiding the cancellation of three large log-gamma values
/// when either shape is large.
pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    let p = a.min(b);
    let q = a.max(b);
    let ratio = p / (p + q);
    if p >= 10.0 {
        let corr = lgamma_correction(p) + lgamma_correction(q) - lgamma_correction(p + q);
        -0.5 * q.ln() + LN_SQRT_2PI + corr + (p - 0.5) * ratio.ln() + q * (-ratio).ln_1p()
    } else if q >= 10.0 {
        let corr = lgamma_correction(q) - lgamma_correction(p + q);
        libm::lgamma(p) + corr + p - p * (p + q).ln() + (q - 0.5) * (-ratio).ln_1p()
    } else {
        libm::lgamma(p) + libm::lgamma(q) - libm::lgamma(p + q)
    }
}

const CF_MAX_ITER: usize = 50_000;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let guard = |v: f64| if v.abs() < CF_TINY { CF_TINY } else { v };

    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() <= CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)` for `a, b > 0`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x.is_nan() || !(a > 0.0 && b > 0.0) {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_continued_fraction(x, a, b) / a).clamp(0.0, 1.0)
    } else {
        (1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b).clamp(0.0, 1.0)
    }
}

fn beta_density(x: f64, a: f64, b: f64) -> f64 {
    ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)).exp()
}

/// Quantile of the Beta(a, b) distribution: the `x` with `I_x(a, b) = q`.
///
/// Safeguarded Newton iteration on the bracket `[0, 1]`: a Newton step is
/// taken when it stays inside the current bracket and shrinks the residual
/// fast enough, otherwise the bracket is bisected.
pub fn beta_quantile(q: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid(
            "a",
            format!("shape must be positive and finite, got {a}"),
        ));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(invalid(
            "b",
            format!("shape must be positive and finite, got {b}"),
        ));
    }
    let q = Probability::new(q)?.get();
    if q == 0.0 {
        return Ok(0.0);
    }
    if q == 1.0 {
        return Ok(1.0);
    }

    let residual = |x: f64| regularized_incomplete_beta(x, a, b) - q;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x = a / (a + b);
    let mut prev_step = hi - lo;
    let mut step = prev_step;
    for _ in 0..400 {
        let fx = residual(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 2.0 * f64::EPSILON * hi.max(f64::MIN_POSITIVE) {
            break;
        }
        let slope = beta_density(x, a, b);
        let newton = x - fx / slope;
        let newton_ok = slope > 0.0
            && newton.is_finite()
            && newton > lo
            && newton < hi
            && (2.0 * fx).abs() <= (prev_step * slope).abs();
        prev_step = step;
        let next = if newton_ok { newton } else { 0.5 * (lo + hi) };
        step = (next - x).abs();
        if next == x || step <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            x = next;
            break;
        }
        x = next;
    }
    // Settle on whichever bracket end has the smaller residual when the
    // iterate drifted to a worse point.
    let mut best = x;
    let mut best_err = residual(x).abs();
    for cand in [lo, hi] {
        if cand > 0.0 && cand < 1.0 {
            let err = residual(cand).abs();
            if err < best_err {
                best = cand;
                best_err = err;
            }
        }
    }
    Ok(best)
}

fn ln_choose(n: u64, k: u64, ln_fact_n: f64) -> f64 {
    let k = k.min(n - k);
    ln_fact_n - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// Relative slack used when comparing outcome probabilities against the
/// observed one, so that mathematically tied outcomes are not split by
/// rounding.
const PMF_TIE_SLACK: f64 = 1.0 + 1e-7;

/// Exact two-sided binomial test p-value for `s` successes out of `n`
/// under `Bin(n, p0)`.
///
/// Sums the probabilities of every outcome no more likely than the observed
/// one. At `p0 = 0.5` the included set and the summation order are
/// symmetric, so `pvalue(s) == pvalue(n - s)` holds bit for bit.
pub fn binom_two_sided_pvalue(s: u64, n: u64, p0: f64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n", "at least one trial is required"));
    }
    if s > n {
        return Err(invalid("s", format!("{s} successes exceed {n} trials")));
    }
    let p0 = Probability::new(p0)?.get();
    if p0 == 0.0 {
        return Ok(if s == 0 { 1.0 } else { 0.0 });
    }
    if p0 == 1.0 {
        return Ok(if s == n { 1.0 } else { 0.0 });
    }

    let ln_p = p0.ln();
    let ln_q = (-p0).ln_1p();
    let ln_fact_n = libm::lgamma(n as f64 + 1.0);
    let ln_pmf = |i: u64| ln_choose(n, i, ln_fact_n) + (i as f64 * ln_p + (n - i) as f64 * ln_q);

    let threshold = ln_pmf(s) + PMF_TIE_SLACK.ln();
    let mut total = 0.0;
    for i in 0..=n {
        let lp = ln_pmf(i);
        if lp <= threshold {
            total += lp.exp();
        }
    }
    Ok(total.min(1.0))
}
