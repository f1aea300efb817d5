//! Clopper-Pearson probability bounds from label counts.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CertError, Result};
use crate::smoothing::{CountVector, Label};
use crate::special::{beta_quantile, Probability};

/// How the label-probability bounds are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMethod {
    /// One-sided Clopper-Pearson bound on the target only; every competitor
    /// is bounded by `1 - lower`.
    BinoCp,
    /// Per-label Clopper-Pearson bounds at level `1 - alpha / c`, jointly
    /// valid by Bonferroni.
    SimuEm,
}

impl BoundMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundMethod::BinoCp => "binocp",
            BoundMethod::SimuEm => "simuem",
        }
    }
}

impl fmt::Display for BoundMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundMethod {
    type Err = CertError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binocp" => Ok(BoundMethod::BinoCp),
            "simuem" => Ok(BoundMethod::SimuEm),
            other => Err(invalid("bound-method", format!("unknown method `{other}`"))),
        }
    }
}

/// A lower bound on the target label's probability and upper bounds on
/// every other label's probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityBounds {
    num_labels: usize,
    target: Label,
    lower: f64,
    /// Indexed by label; the entry at `target` is unused and stored as 1.
    upper: Vec<f64>,
    /// Overall error budget, when the bounds came from sampling.
    alpha: Option<f64>,
    method: Option<BoundMethod>,
}

impl ProbabilityBounds {
    /// Bounds supplied directly rather than estimated.
    ///
    /// `competitor_uppers` lists the upper bounds of all labels except
    /// `target`, in increasing label order.
    pub fn from_parts(target: Label, lower: f64, competitor_uppers: &[f64]) -> Result<Self> {
        let num_labels = competitor_uppers.len() + 1;
        if num_labels < 2 {
            return Err(invalid("uppers", "need at least one competitor"));
        }
        if target >= num_labels {
            return Err(CertError::LabelOutOfRange {
                label: target,
                num_labels,
            });
        }
        Probability::new(lower)?;
        let mut upper = Vec::with_capacity(num_labels);
        let mut rest = competitor_uppers.iter();
        for label in 0..num_labels {
            if label == target {
                upper.push(1.0);
            } else {
                let u = *rest.next().expect("length checked above");
                Probability::new(u)?;
                upper.push(u);
            }
        }
        Ok(Self {
            num_labels,
            target,
            lower,
            upper,
            alpha: None,
            method: None,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn target(&self) -> Label {
        self.target
    }

    /// Lower bound on the target label probability.
    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Upper bound for a competitor label; `None` for the target.
    pub fn upper(&self, label: Label) -> Option<f64> {
        (label != self.target).then(|| self.upper[label])
    }

    /// `(label, upper)` for every competitor, in label order.
    pub fn competitors(&self) -> impl Iterator<Item = (Label, f64)> + '_ {
        self.upper
            .iter()
            .copied()
            .enumerate()
            .filter(move |(label, _)| *label != self.target)
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn method(&self) -> Option<BoundMethod> {
        self.method
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")))
    }
}

/// One-sided Clopper-Pearson lower bound at level `1 - alpha`.
fn cp_lower(successes: u64, n: u64, alpha: f64) -> Result<f64> {
    if successes == 0 {
        return Ok(0.0);
    }
    beta_quantile(alpha, successes as f64, (n - successes) as f64 + 1.0)
}

/// One-sided Clopper-Pearson upper bound at level `1 - alpha`.
fn cp_upper(successes: u64, n: u64, alpha: f64) -> Result<f64> {
    if successes == n {
        return Ok(1.0);
    }
    beta_quantile(1.0 - alpha, successes as f64 + 1.0, (n - successes) as f64)
}

/// BinoCP: Clopper-Pearson lower bound for `target` at level `1 - alpha`,
/// competitors bounded by its complement.
pub fn binocp_bounds(counts: &CountVector, target: Label, alpha: f64) -> Result<ProbabilityBounds> {
    counts.check_label(target)?;
    check_alpha(alpha)?;
    let n = counts.n();
    let lower = cp_lower(counts.get(target), n, alpha)?;
    let c = counts.num_labels();
    let mut upper = vec![1.0 - lower; c];
    upper[target] = 1.0;
    Ok(ProbabilityBounds {
        num_labels: c,
        target,
        lower,
        upper,
        alpha: Some(alpha),
        method: Some(BoundMethod::BinoCp),
    })
}

/// SimuEM: Clopper-Pearson bounds for every label at level `1 - alpha / c`.
pub fn simuem_bounds(counts: &CountVector, target: Label, alpha: f64) -> Result<ProbabilityBounds> {
    counts.check_label(target)?;
    check_alpha(alpha)?;
    let n = counts.n();
    let c = counts.num_labels();
    let per_label = alpha / c as f64;
    let lower = cp_lower(counts.get(target), n, per_label)?;
    let upper = (0..c)
        .map(|label| {
            if label == target {
                Ok(1.0)
            } else {
                cp_upper(counts.get(label), n, per_label)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbabilityBounds {
        num_labels: c,
        target,
        lower,
        upper,
        alpha: Some(alpha),
        method: Some(BoundMethod::SimuEm),
    })
}

pub fn estimate_bounds(
    method: BoundMethod,
    counts: &CountVector,
    target: Label,
    alpha: f64,
) -> Result<ProbabilityBounds> {
    match method {
        BoundMethod::BinoCp => binocp_bounds(counts, target, alpha),
        BoundMethod::SimuEm => simuem_bounds(counts, target, alpha),
    }
}

/// Upper bounds on the total probability of the `t` weakest of the `k`
/// strongest competitors, `t = 1..=k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixUpperBounds {
    /// `values[t - 1] = min(sum of the t smallest selected uppers, 1 - lower)`.
    pub values: Vec<f64>,
    /// The selected competitors `b_1..b_k`, ascending by upper bound.
    pub labels: Vec<Label>,
    /// Upper bounds of `labels`, ascending.
    pub uppers: Vec<f64>,
}

impl PrefixUpperBounds {
    pub fn k(&self) -> usize {
        self.values.len()
    }
}

/// The `k` competitors with the largest upper bounds, returned in ascending
/// order of upper bound. Ties are ordered uniformly at random by `seed`.
pub fn select_top_competitors(
    bounds: &ProbabilityBounds,
    k: usize,
    seed: u64,
) -> Result<Vec<(Label, f64)>> {
    let c = bounds.num_labels();
    if k == 0 || k >= c {
        return Err(invalid("k", format!("must lie in 1..={}, got {k}", c - 1)));
    }
    let mut competitors: Vec<(Label, f64)> = bounds.competitors().collect();
    competitors.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    competitors.sort_by(|a, b| b.1.total_cmp(&a.1));
    competitors.truncate(k);
    competitors.reverse();
    Ok(competitors)
}

/// Combines the selected competitor bounds into the prefix bounds used by
/// the radius equation: the running sum from the smallest selected upper
/// bound, capped at `1 - lower`.
pub fn prefix_upper_bounds(
    bounds: &ProbabilityBounds,
    k: usize,
    seed: u64,
) -> Result<PrefixUpperBounds> {
    let selected = select_top_competitors(bounds, k, seed)?;
    let cap = 1.0 - bounds.lower();
    let mut running = 0.0;
    let mut values = Vec::with_capacity(k);
    for (_, u) in &selected {
        running += u;
        values.push(running.min(cap));
    }
    Ok(PrefixUpperBounds {
        values,
        labels: selected.iter().map(|(l, _)| *l).collect(),
        uppers: selected.iter().map(|(_, u)| *u).collect(),
    })
}
