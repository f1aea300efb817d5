//! Abstaining top-k prediction.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::smoothing::{
    derive_seed, sample_under_noise, top_indices, BaseClassifier, CountVector, ExamplePoint, Label,
    NoiseModel,
};
use crate::special::binom_two_sided_pvalue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    /// The predicted top-k set in descending count order, or `None` for
    /// abstention.
    pub labels: Option<Vec<Label>>,
    /// p-values of the tests that were run. On abstention the last entry is
    /// the one that failed.
    pub pvalues: Vec<f64>,
}

impl PredictionResult {
    pub fn abstained(&self) -> bool {
        self.labels.is_none()
    }
}

/// Runs the sequential pairwise tests on already sampled counts.
///
/// The labels are ranked by count (ties broken by `seed`); for each
/// `t = 1..=k` the count of the t-th label is tested against the
/// (t+1)-th with a two-sided binomial test at `p0 = 0.5`. The first
/// p-value above `alpha` causes abstention.
pub fn predict_from_counts(
    counts: &CountVector,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<PredictionResult> {
    let c = counts.num_labels();
    if k == 0 || k >= c {
        return Err(invalid("k", format!("must lie in 1..={}, got {k}", c - 1)));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    let ranked = top_indices(counts, k + 1, seed)?;
    let mut pvalues = Vec::with_capacity(k);
    for t in 0..k {
        let a = counts.get(ranked[t]);
        let b = counts.get(ranked[t + 1]);
        // Two labels with no hits at all carry no evidence either way.
        let p = if a + b == 0 {
            1.0
        } else {
            binom_two_sided_pvalue(a, a + b, 0.5)?
        };
        pvalues.push(p);
        if p > alpha {
            return Ok(PredictionResult {
                labels: None,
                pvalues,
            });
        }
    }
    Ok(PredictionResult {
        labels: Some(ranked[..k].to_vec()),
        pvalues,
    })
}

/// Samples `n` noisy copies of `x` and predicts the top-k set of the
/// smoothed classifier, abstaining when the counts are inconclusive.
pub fn predict_topk<F: BaseClassifier + ?Sized>(
    f: &F,
    x: &ExamplePoint,
    k: usize,
    noise: NoiseModel,
    n: u64,
    alpha: f64,
    seed: u64,
) -> Result<PredictionResult> {
    let c = f.num_labels();
    if k == 0 || k >= c {
        return Err(invalid("k", format!("must lie in 1..={}, got {k}", c - 1)));
    }
    let counts = sample_under_noise(f, x, noise, n, derive_seed(seed, 0))?;
    predict_from_counts(&counts, k, alpha, derive_seed(seed, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::SyntheticTabularClassifier;

    #[test]
    fn collapsed_counts_predict_top_label() {
        let counts = CountVector::new(vec![0, 100, 0]).unwrap();
        let r = predict_from_counts(&counts, 1, 0.001, 0).unwrap();
        assert_eq!(r.labels, Some(vec![1]));
        let expected = 2.0 * 0.5_f64.powi(100);
        assert!((r.pvalues[0] - expected).abs() <= 1e-12 * expected);
        assert!((r.pvalues[0] - 1.6e-30).abs() < 0.1e-30);
    }

    #[test]
    fn close_counts_abstain() {
        let counts = CountVector::new(vec![40, 60]).unwrap();
        let r = predict_from_counts(&counts, 1, 0.001, 0).unwrap();
        assert!(r.abstained());
        // Exact summation: sum of C(100, i) / 2^100 over |i - 50| >= 10.
        let mut tail = 0.0;
        let mut coef = 1.0_f64;
        for i in 0..=100u32 {
            if i > 0 {
                coef = coef * (101 - i) as f64 / i as f64;
            }
            if (i as i32 - 50).abs() >= 10 {
                tail += coef;
            }
        }
        let oracle = tail / 2f64.powi(100);
        assert!((r.pvalues[0] - oracle).abs() < 1e-12);
        assert!((r.pvalues[0] - 0.0569).abs() < 1e-4, "{}", r.pvalues[0]);
    }

    #[test]
    fn abstention_stops_at_first_failure() {
        let counts = CountVector::new(vec![500, 10, 9, 0]).unwrap();
        let r = predict_from_counts(&counts, 3, 0.01, 0).unwrap();
        assert!(r.abstained());
        assert_eq!(r.pvalues.len(), 2);
        let r = predict_from_counts(&counts, 1, 0.01, 0).unwrap();
        assert_eq!(r.labels, Some(vec![0]));
    }

    #[test]
    fn rejects_bad_parameters() {
        let counts = CountVector::new(vec![5, 5]).unwrap();
        assert!(predict_from_counts(&counts, 2, 0.01, 0).is_err());
        assert!(predict_from_counts(&counts, 0, 0.01, 0).is_err());
        assert!(predict_from_counts(&counts, 1, 1.5, 0).is_err());
    }

    #[test]
    fn prediction_is_deterministic() {
        let f = SyntheticTabularClassifier::new(vec![0.5, 0.3, 0.2], 1, 9).unwrap();
        let x = ExamplePoint::zeros(1).unwrap();
        let noise = NoiseModel::new(0.5).unwrap();
        let a = predict_topk(&f, &x, 2, noise, 5000, 0.01, 17).unwrap();
        let b = predict_topk(&f, &x, 2, noise, 5000, 0.01, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labels, Some(vec![0, 1]));
    }

    #[test]
    fn close_probabilities_rarely_wrong() {
        let f = SyntheticTabularClassifier::new(vec![0.34, 0.33, 0.33], 1, 21).unwrap();
        let x = ExamplePoint::zeros(1).unwrap();
        let noise = NoiseModel::new(0.5).unwrap();
        let alpha = 0.01;
        let runs = 300;
        let mut wrong = 0;
        let mut abstained = 0;
        for seed in 0..runs {
            let r = predict_topk(&f, &x, 1, noise, 2000, alpha, seed).unwrap();
            match r.labels {
                None => abstained += 1,
                Some(l) if l != vec![0] => wrong += 1,
                Some(_) => {}
            }
        }
        let tol = alpha + 3.0 * (alpha * (1.0 - alpha) / runs as f64).sqrt();
        assert!(wrong as f64 / runs as f64 <= tol, "{wrong}");
        assert!(abstained as f64 / runs as f64 > 0.9, "{abstained}");
    }
}
