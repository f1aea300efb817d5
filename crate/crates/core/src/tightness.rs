//! Worst-case base classifiers showing the certified radius is tight.
//!
//! Every region used here depends on the input only through its projection
//! onto the perturbation direction. In the coordinate
//! `v = Phi(delta^T (z - x) / (sigma |delta|))` the clean noise is uniform on
//! `[0, 1]` and the shifted noise has CDF `Phi(Phi^-1(v) - lambda)`, so both
//! measures of an interval set have closed forms.
//!
//! The construction itself works in the reflected coordinate `q = 1 - v`,
//! where the shifted measure of `(q1, q2]` is `G(q2) - G(q1)` with
//! `G(q) = Phi(Phi^-1(q) + lambda)`. Competitors are packed from `q = 0`
//! upwards, the target label sits at the top.

use serde::{Deserialize, Serialize};

use crate::bounds::{select_top_competitors, ProbabilityBounds};
use crate::error::{invalid, CertError, Result};
use crate::smoothing::Label;
use crate::special::{std_normal_cdf, std_normal_quantile};

/// Slack allowed on the two feasibility inequalities.
const FEASIBILITY_SLACK: f64 = 1e-12;

/// Tolerance on consistency and measure equalities.
pub const MEASURE_TOLERANCE: f64 = 1e-9;

/// Largest sign violation of a root bracket that is treated as rounding.
const BRACKET_SLACK: f64 = 1e-12;

/// `|delta|_2 / sigma`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ShiftRatio {
    lambda: f64,
}

impl ShiftRatio {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda >= 0.0 && lambda.is_finite() {
            Ok(Self { lambda })
        } else {
            Err(invalid(
                "lambda",
                format!("must be finite and non-negative, got {lambda}"),
            ))
        }
    }

    /// Shift for a perturbation of norm `radius` under noise level `sigma`.
    pub fn from_radius(radius: f64, sigma: f64) -> Result<Self> {
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(invalid("sigma", format!("must be positive, got {sigma}")));
        }
        Self::new(radius / sigma)
    }

    pub fn lambda(self) -> f64 {
        self.lambda
    }
}

/// Disjoint half-open intervals `(a, b]` of `[0, 1]`, sorted, with touching
/// intervals merged.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuantileIntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl QuantileIntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds the canonical form of a list of intervals.
    ///
    /// Empty intervals (`a == b`) are dropped; overlapping ones are rejected.
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        for &(a, b) in &intervals {
            if !(0.0 <= a && a <= b && b <= 1.0) {
                return Err(invalid(
                    "interval",
                    format!("({a}, {b}] is not inside [0, 1]"),
                ));
            }
        }
        intervals.retain(|(a, b)| a < b);
        intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for (a, b) in intervals {
            match merged.last_mut() {
                Some(last) if a < last.1 => {
                    return Err(invalid(
                        "interval",
                        format!("({a}, {b}] overlaps ({}, {}]", last.0, last.1),
                    ));
                }
                Some(last) if a == last.1 => last.1 = b,
                _ => merged.push((a, b)),
            }
        }
        Ok(Self { intervals: merged })
    }

    /// The whole unit interval.
    pub fn full() -> Self {
        Self {
            intervals: vec![(0.0, 1.0)],
        }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, v: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a < v && v <= b)
    }

    /// Union with a set known to be disjoint from this one.
    pub fn union(&self, other: &Self) -> Result<Self> {
        let mut all = self.intervals.clone();
        all.extend_from_slice(&other.intervals);
        Self::new(all)
    }
}

/// Probability of the set under the clean noise: its total length.
pub fn measure_clean(set: &QuantileIntervalSet) -> f64 {
    set.intervals.iter().map(|(a, b)| b - a).sum()
}

/// Probability of the set under the shifted noise,
/// `sum Phi(Phi^-1(b) - lambda) - Phi(Phi^-1(a) - lambda)`.
pub fn measure_shifted(set: &QuantileIntervalSet, shift: ShiftRatio) -> f64 {
    let lambda = shift.lambda();
    if lambda == 0.0 {
        return measure_clean(set);
    }
    let cdf = |v: f64| std_normal_cdf(std_normal_quantile(v) - lambda);
    set.intervals.iter().map(|&(a, b)| cdf(b) - cdf(a)).sum()
}

/// A base classifier on the projected coordinate: each label owns an
/// interval set and together they partition `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseClassifier {
    /// Indexed by label.
    pub assignment: Vec<QuantileIntervalSet>,
    pub target: Label,
    /// `b_1..b_k`, ascending by upper bound.
    pub competitors: Vec<Label>,
    /// `min_t Pr_Y(B_{S_t}) / t`; each competitor's shifted measure reaches it.
    pub threshold: f64,
    /// The minimising `t` (1-based).
    pub tau: usize,
    pub shift: ShiftRatio,
}

impl WorstCaseClassifier {
    pub fn num_labels(&self) -> usize {
        self.assignment.len()
    }

    pub fn region(&self, label: Label) -> &QuantileIntervalSet {
        &self.assignment[label]
    }

    /// Label of the point with coordinate `v`, or `None` outside `(0, 1]`
    /// or in an unassigned gap.
    pub fn classify(&self, v: f64) -> Option<Label> {
        self.assignment.iter().position(|s| s.contains(v))
    }

    /// Checks that the sets are disjoint and cover `[0, 1]` up to `tol`.
    pub fn is_partition(&self, tol: f64) -> bool {
        let mut all: Vec<(f64, f64)> = self
            .assignment
            .iter()
            .flat_map(|s| s.intervals.iter().copied())
            .collect();
        all.sort_by(|x, y| x.0.total_cmp(&y.0));
        let disjoint = all.windows(2).all(|w| w[1].0 >= w[0].1 - tol);
        let total: f64 = all.iter().map(|(a, b)| b - a).sum();
        disjoint && (total - 1.0).abs() <= tol
    }
}

/// Free space in the `q` coordinate, as sorted disjoint intervals.
#[derive(Debug, Clone)]
struct FreeSpace {
    intervals: Vec<(f64, f64)>,
}

impl FreeSpace {
    fn new(a: f64, b: f64) -> Self {
        Self {
            intervals: if a < b { vec![(a, b)] } else { Vec::new() },
        }
    }

    fn total(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    /// The point with free measure `s` to its left.
    fn position(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for &(a, b) in &self.intervals {
            let len = b - a;
            if s <= acc + len {
                return (a + (s - acc)).clamp(a, b);
            }
            acc += len;
        }
        self.intervals.last().map_or(0.0, |iv| iv.1)
    }

    /// Free space inside `(pos(s - w), pos(s)]`.
    fn window(&self, s: f64, w: f64) -> Vec<(f64, f64)> {
        let lo = self.position(s - w);
        let hi = self.position(s);
        self.clip(lo, hi)
    }

    fn clip(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        self.intervals
            .iter()
            .filter_map(|&(a, b)| {
                let (a, b) = (a.max(lo), b.min(hi));
                (a < b).then_some((a, b))
            })
            .collect()
    }

    fn remove(&mut self, pieces: &[(f64, f64)]) {
        for &(lo, hi) in pieces {
            let mut next = Vec::with_capacity(self.intervals.len() + 1);
            for &(a, b) in &self.intervals {
                if a < lo.min(b) {
                    next.push((a, lo.min(b)));
                }
                if hi.max(a) < b {
                    next.push((hi.max(a), b));
                }
            }
            self.intervals = next;
        }
    }
}

/// Shifted measure in the `q` coordinate.
struct Shifted {
    lambda: f64,
}

impl Shifted {
    fn g(&self, q: f64) -> f64 {
        std_normal_cdf(std_normal_quantile(q) + self.lambda)
    }

    fn of(&self, pieces: &[(f64, f64)]) -> f64 {
        pieces.iter().map(|&(a, b)| self.g(b) - self.g(a)).sum()
    }
}

/// Largest `s` in `[lo, hi]` with `f(s) >= 0` for a non-increasing `f`,
/// assuming `f(lo) >= 0 > f(hi)`.
fn bisect_last_nonnegative(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Carves a piece of clean measure `w` out of `free` whose shifted measure
/// equals `target`. With `allow_excess`, a rightmost piece whose shifted
/// measure already exceeds `target` is taken as is.
fn carve(
    free: &mut FreeSpace,
    w: f64,
    target: f64,
    shifted: &Shifted,
    allow_excess: bool,
) -> Result<Vec<(f64, f64)>> {
    let total = free.total();
    if w <= 0.0 {
        return Ok(Vec::new());
    }
    let piece = if w >= total - BRACKET_SLACK {
        free.intervals.clone()
    } else {
        let f = |s: f64| shifted.of(&free.window(s, w)) - target;
        let at_right = f(total);
        let at_left = f(w);
        let s = if at_right >= 0.0 {
            if !allow_excess && at_right > BRACKET_SLACK {
                return Err(CertError::Construction(format!(
                    "rightmost piece exceeds the target by {at_right:e}"
                )));
            }
            total
        } else if at_left < 0.0 {
            if at_left < -BRACKET_SLACK {
                return Err(CertError::Construction(format!(
                    "leftmost piece falls short of the target by {:e}",
                    -at_left
                )));
            }
            w
        } else {
            bisect_last_nonnegative(w, total, f)
        };
        free.window(s, w)
    };
    free.remove(&piece);
    Ok(piece)
}

fn to_v(pieces: &[(f64, f64)]) -> Vec<(f64, f64)> {
    pieces.iter().map(|&(a, b)| (1.0 - b, 1.0 - a)).collect()
}

/// Builds a classifier consistent with `bounds` that gives the target the
/// smallest possible shifted probability and each of the `k` strongest
/// competitors at least `min_t Pr_Y(B_{S_t}) / t`.
///
/// Requires `lower + sum_{j<=k} upper_{b_j} <= 1` (the competitor regions fit
/// beside the target) and `lower + sum_{i != l} upper_i >= 1` (the bounds
/// can cover the whole space). `seed` breaks ties among equal upper bounds.
pub fn construct_worst_case(
    bounds: &ProbabilityBounds,
    k: usize,
    shift: ShiftRatio,
    seed: u64,
) -> Result<WorstCaseClassifier> {
    let c = bounds.num_labels();
    let ranked = select_top_competitors(bounds, c - 1, seed)?;
    if k == 0 || k >= c {
        return Err(invalid("k", format!("must lie in 1..={}, got {k}", c - 1)));
    }
    let lower = bounds.lower();
    let top = &ranked[c - 1 - k..];
    let uppers: Vec<f64> = top.iter().map(|(_, u)| *u).collect();
    let p_k: f64 = uppers.iter().sum();
    if lower + p_k > 1.0 + FEASIBILITY_SLACK {
        return Err(CertError::InfeasibleBounds(format!(
            "lower + sum of the {k} largest competitor uppers = {} exceeds 1",
            lower + p_k
        )));
    }
    let all: f64 = ranked.iter().map(|(_, u)| u).sum();
    if lower + all < 1.0 - FEASIBILITY_SLACK {
        return Err(CertError::InfeasibleBounds(format!(
            "lower + sum of all competitor uppers = {} is below 1",
            lower + all
        )));
    }

    let shifted = Shifted {
        lambda: shift.lambda(),
    };
    let prefix: Vec<f64> = uppers
        .iter()
        .scan(0.0, |acc, u| {
            *acc += u;
            Some(*acc)
        })
        .collect();
    let mut tau = 1;
    let mut threshold = f64::INFINITY;
    for (i, p) in prefix.iter().enumerate() {
        let v = shifted.g(*p) / (i + 1) as f64;
        if v < threshold {
            threshold = v;
            tau = i + 1;
        }
    }

    let mut pieces: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];

    // Split B_{S_tau} = (0, P_tau] into tau pieces of equal shifted measure.
    let mut free = FreeSpace::new(0.0, prefix[tau - 1]);
    for e in (0..tau).rev() {
        pieces[e] = carve(&mut free, uppers[e], threshold, &shifted, false)?;
    }
    // Split (P_tau, P_k] into pieces reaching at least the threshold.
    let mut free = FreeSpace::new(prefix[tau - 1], prefix[k - 1]);
    for e in (tau..k).rev() {
        pieces[e] = carve(&mut free, uppers[e], threshold, &shifted, true)?;
    }

    let mut assignment = vec![Vec::<(f64, f64)>::new(); c];
    assignment[bounds.target()].push((0.0, lower));
    for ((label, _), piece) in top.iter().zip(&pieces) {
        assignment[*label] = to_v(piece);
    }

    // Remaining labels, strongest first, fill (P_k, 1 - lower] from the left.
    let rest: Vec<(Label, f64)> = ranked[..c - 1 - k].iter().rev().copied().collect();
    let end = 1.0 - lower;
    let mut cursor = prefix[k - 1].min(end);
    for (label, u) in &rest {
        let next = (cursor + u).min(end);
        if next > cursor {
            assignment[*label].push((1.0 - next, 1.0 - cursor));
        }
        cursor = next;
    }
    if cursor < end {
        let residue = end - cursor;
        if residue > FEASIBILITY_SLACK {
            return Err(CertError::Construction(format!(
                "{residue:e} of the space is left unassigned"
            )));
        }
        let owner = rest.last().map_or(top[k - 1].0, |(l, _)| *l);
        assignment[owner].push((1.0 - end, 1.0 - cursor));
    }

    let assignment = assignment
        .into_iter()
        .map(QuantileIntervalSet::new)
        .collect::<Result<Vec<_>>>()?;
    Ok(WorstCaseClassifier {
        assignment,
        target: bounds.target(),
        competitors: top.iter().map(|(l, _)| *l).collect(),
        threshold,
        tau,
        shift,
    })
}

/// Whether `wc` partitions `[0, 1]` and its clean measures respect
/// `bounds`, up to `MEASURE_TOLERANCE`.
pub fn is_consistent(wc: &WorstCaseClassifier, bounds: &ProbabilityBounds) -> bool {
    wc.num_labels() == bounds.num_labels()
        && wc.is_partition(MEASURE_TOLERANCE)
        && (0..wc.num_labels()).all(|label| {
            let m = measure_clean(wc.region(label));
            match bounds.upper(label) {
                None => m >= bounds.lower() - MEASURE_TOLERANCE,
                Some(u) => m <= u + MEASURE_TOLERANCE,
            }
        })
}

/// Whether `wc` is consistent with `bounds` under the clean noise while
/// pushing label `l` out of the shifted top-k.
pub fn verify_violation(
    wc: &WorstCaseClassifier,
    bounds: &ProbabilityBounds,
    k: usize,
    shift: ShiftRatio,
    l: Label,
) -> bool {
    let c = wc.num_labels();
    if l >= c || k == 0 || k >= c || !is_consistent(wc, bounds) {
        return false;
    }
    let mut others: Vec<f64> = (0..c)
        .filter(|i| *i != l)
        .map(|i| measure_shifted(wc.region(i), shift))
        .collect();
    others.sort_by(|a, b| b.total_cmp(a));
    measure_shifted(wc.region(l), shift) < others[k - 1]
}
