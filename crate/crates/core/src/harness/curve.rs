use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub radius: f64,
    /// Fraction of examples certified at radius `>= radius`.
    pub accuracy: f64,
    /// High-probability lower bound on the true certified accuracy.
    pub lower_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub points: Vec<CurvePoint>,
}

impl AccuracyCurve {
    pub fn is_non_increasing(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].accuracy <= w[0].accuracy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyLowerBoundInput {
    /// Number of test examples.
    pub m: u64,
    /// Examples certified at the radius of interest.
    pub approx_count: u64,
    /// Per-example certification error.
    pub alpha: f64,
    /// Failure probability of the bound itself.
    pub rho: f64,
}

/// `(Y/m - alpha - sqrt(2 alpha (1 - alpha) ln(1/rho) / m) - ln(1/rho) / (3m)) / (1 - alpha)`.
///
/// Holds with probability at least `1 - rho` when each of the `m`
/// certificates is wrong with probability at most `alpha`. May be negative.
pub fn accuracy_lower_bound(input: AccuracyLowerBoundInput) -> Result<f64> {
    let AccuracyLowerBoundInput {
        m,
        approx_count,
        alpha,
        rho,
    } = input;
    if m == 0 {
        return Err(invalid("m", "need at least one example"));
    }
    if approx_count > m {
        return Err(invalid(
            "approx_count",
            format!("{approx_count} exceeds m = {m}"),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(invalid("rho", format!("must lie in (0, 1), got {rho}")));
    }
    let m = m as f64;
    let log_term = (1.0 / rho).ln();
    let mean = approx_count as f64 / m;
    let bernstein = (2.0 * alpha * (1.0 - alpha) * log_term / m).sqrt() + log_term / (3.0 * m);
    Ok((mean - alpha - bernstein) / (1.0 - alpha))
}

/// Accuracy at each grid radius: the fraction of `radii` (with `None` for
/// abstention) that are at least the grid value.
///
/// With `correction = Some((alpha, rho))` each point also carries the
/// lower bound from [`accuracy_lower_bound`].
pub fn certified_accuracy_curve(
    radii: &[Option<f64>],
    grid: &[f64],
    correction: Option<(f64, f64)>,
) -> Result<AccuracyCurve> {
    if radii.is_empty() {
        return Err(invalid("results", "need at least one example"));
    }
    check_grid(grid)?;
    let m = radii.len() as u64;
    let points = grid
        .iter()
        .map(|&r| {
            let count = radii
                .iter()
                .filter(|x| matches!(x, Some(v) if *v >= r))
                .count() as u64;
            let lower_bound = correction
                .map(|(alpha, rho)| {
                    accuracy_lower_bound(AccuracyLowerBoundInput {
                        m,
                        approx_count: count,
                        alpha,
                        rho,
                    })
                })
                .transpose()?;
            Ok(CurvePoint {
                radius: r,
                accuracy: count as f64 / m as f64,
                lower_bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = AccuracyCurve { points };
    assert!(
        curve.is_non_increasing(),
        "accuracy curve must be non-increasing"
    );
    Ok(curve)
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("grid", "must contain at least one radius"));
    }
    if grid.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(invalid("grid", "radii must be finite and non-negative"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("grid", "radii must be sorted ascending"));
    }
    Ok(())
}

/// `0, step, 2 step, ..., max` (inclusive, up to rounding).
pub fn uniform_grid(max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && max >= 0.0 && max.is_finite()) {
        return Err(invalid("grid", format!("bad range 0..={max} step {step}")));
    }
    let count = (max / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| i as f64 * step).collect())
}
