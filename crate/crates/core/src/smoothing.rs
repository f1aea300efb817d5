//! Base classifiers, Gaussian noise, and Monte Carlo label counting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CertError, Result};

/// Zero-based class label.
pub type Label = usize;

/// Name of the noise generator, written into run metadata so results can be
/// reproduced.
pub const GENERATOR: &str = "ChaCha8Rng(seed, stream=chunk) + rand_distr::StandardNormal";

/// Samples drawn per independently seeded chunk.
pub const CHUNK_SIZE: u64 = 8192;

/// Isotropic Gaussian noise `N(0, sigma^2 I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(Self { sigma })
        } else {
            Err(invalid(
                "sigma",
                format!("must be positive and finite, got {sigma}"),
            ))
        }
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// A point in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplePoint {
    features: Vec<f64>,
}

impl ExamplePoint {
    pub fn new(features: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(invalid("features", "dimension must be at least 1"));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(invalid("features", format!("non-finite coordinate {bad}")));
        }
        Ok(Self { features })
    }

    /// The origin of `R^dimension`.
    pub fn zeros(dimension: usize) -> Result<Self> {
        Self::new(vec![0.0; dimension])
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn dimension(&self) -> usize {
        self.features.len()
    }
}

/// Any deterministic labelling of feature vectors.
///
/// Implementations are shared across sampling threads, so `classify` must
/// be a pure function of its input.
pub trait BaseClassifier: Sync {
    /// Number of labels `c`; returned labels lie in `0..c`.
    fn num_labels(&self) -> usize;

    /// Expected length of feature vectors.
    fn dimension(&self) -> usize;

    fn classify(&self, point: &[f64]) -> Label;
}

/// Always predicts the same label.
#[derive(Debug, Clone)]
pub struct ConstantClassifier {
    label: Label,
    num_labels: usize,
    dimension: usize,
}

impl ConstantClassifier {
    pub fn new(label: Label, num_labels: usize, dimension: usize) -> Result<Self> {
        if num_labels < 2 {
            return Err(invalid("num_labels", "need at least two labels"));
        }
        if label >= num_labels {
            return Err(CertError::LabelOutOfRange { label, num_labels });
        }
        if dimension == 0 {
            return Err(invalid("dimension", "must be at least 1"));
        }
        Ok(Self {
            label,
            num_labels,
            dimension,
        })
    }
}

impl BaseClassifier for ConstantClassifier {
    fn num_labels(&self) -> usize {
        self.num_labels
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn classify(&self, _point: &[f64]) -> Label {
        self.label
    }
}

/// Tolerance on the row sum of a label-probability vector.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Desk-scale stand-in for a trained network with known smoothed
/// probabilities.
///
/// The perturbed input is hashed to a uniform variate in `[0, 1)`, which is
/// then mapped through the cumulative label distribution. Any continuous
/// noise on the input therefore yields labels distributed exactly as the
/// stored row, while `classify` stays a deterministic function of the input.
#[derive(Debug, Clone)]
pub struct SyntheticTabularClassifier {
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
    dimension: usize,
    salt: u64,
}

impl SyntheticTabularClassifier {
    pub fn new(probabilities: Vec<f64>, dimension: usize, salt: u64) -> Result<Self> {
        if probabilities.len() < 2 {
            return Err(invalid("probabilities", "need at least two labels"));
        }
        if dimension == 0 {
            return Err(invalid("dimension", "must be at least 1"));
        }
        if let Some(bad) = probabilities
            .iter()
            .find(|p| !(**p >= 0.0 && p.is_finite()))
        {
            return Err(invalid(
                "probabilities",
                format!("entry {bad} is not a probability"),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(invalid(
                "probabilities",
                format!("row sums to {total}, expected 1"),
            ));
        }

        let mut cumulative: Vec<f64> = probabilities
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let last_positive = probabilities.iter().rposition(|p| *p > 0.0).unwrap_or(0);
        for c in &mut cumulative[last_positive..] {
            *c = 1.0;
        }
        Ok(Self {
            probabilities,
            cumulative,
            dimension,
            salt,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministically derives an independent seed from `seed` and a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

impl BaseClassifier for SyntheticTabularClassifier {
    fn num_labels(&self) -> usize {
        self.probabilities.len()
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn classify(&self, point: &[f64]) -> Label {
        let mut h = mix64(self.salt ^ 0x6a09_e667_f3bc_c909);
        for v in point {
            h = mix64(h ^ v.to_bits());
        }
        let u = (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        self.cumulative
            .partition_point(|c| *c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Per-label Monte Carlo hit counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountVector {
    counts: Vec<u64>,
}

impl CountVector {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(invalid("counts", "need at least two labels"));
        }
        if counts.iter().all(|c| *c == 0) {
            return Err(invalid("counts", "total sample count must be positive"));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, label: Label) -> u64 {
        self.counts[label]
    }

    pub fn num_labels(&self) -> usize {
        self.counts.len()
    }

    /// Total number of samples.
    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub(crate) fn check_label(&self, label: Label) -> Result<()> {
        if label < self.counts.len() {
            Ok(())
        } else {
            Err(CertError::LabelOutOfRange {
                label,
                num_labels: self.counts.len(),
            })
        }
    }
}

fn sample_chunk<F: BaseClassifier + ?Sized>(
    f: &F,
    x: &ExamplePoint,
    sigma: f64,
    seed: u64,
    chunk: u64,
    len: u64,
) -> Result<Vec<u64>> {
    let c = f.num_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    let mut counts = vec![0u64; c];
    let mut point = x.features().to_vec();
    for _ in 0..len {
        for (z, base) in point.iter_mut().zip(x.features()) {
            let e: f64 = StandardNormal.sample(&mut rng);
            *z = base + sigma * e;
        }
        let label = f.classify(&point);
        if label >= c {
            return Err(CertError::LabelOutOfRange {
                label,
                num_labels: c,
            });
        }
        counts[label] += 1;
    }
    Ok(counts)
}

/// Draws `n` Gaussian perturbations of `x`, classifies each, and returns the
/// per-label counts.
///
/// Work is split into fixed-size chunks, each with its own ChaCha stream
/// selected by chunk index, so the result depends only on
/// `(seed, x, sigma, n)` and not on how chunks are scheduled.
pub fn sample_under_noise<F: BaseClassifier + ?Sized>(
    f: &F,
    x: &ExamplePoint,
    noise: NoiseModel,
    n: u64,
    seed: u64,
) -> Result<CountVector> {
    if n == 0 {
        return Err(invalid("n", "at least one sample is required"));
    }
    if x.dimension() != f.dimension() {
        return Err(CertError::DimensionMismatch {
            expected: f.dimension(),
            actual: x.dimension(),
        });
    }
    let chunks = n.div_ceil(CHUNK_SIZE);
    let sigma = noise.sigma();
    let c = f.num_labels();
    let counts = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let len = CHUNK_SIZE.min(n - chunk * CHUNK_SIZE);
            sample_chunk(f, x, sigma, seed, chunk, len)
        })
        .try_reduce(
            || vec![0u64; c],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;
    CountVector::new(counts)
}

/// The `m` labels with the largest counts, in descending count order.
/// Equal counts are ordered uniformly at random by `seed`.
pub fn top_indices(counts: &CountVector, m: usize, seed: u64) -> Result<Vec<Label>> {
    let c = counts.num_labels();
    if m == 0 || m > c {
        return Err(invalid("m", format!("must lie in 1..={c}, got {m}")));
    }
    let mut labels: Vec<Label> = (0..c).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // Stable sort keeps the shuffled order among ties.
    labels.sort_by_key(|l| std::cmp::Reverse(counts.get(*l)));
    labels.truncate(m);
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin(d: usize) -> ExamplePoint {
        ExamplePoint::zeros(d).unwrap()
    }

    #[test]
    fn constant_classifier_counts() {
        let f = ConstantClassifier::new(2, 4, 3).unwrap();
        let counts =
            sample_under_noise(&f, &origin(3), NoiseModel::new(0.5).unwrap(), 1000, 7).unwrap();
        assert_eq!(counts.counts(), &[0, 0, 1000, 0]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let f = SyntheticTabularClassifier::new(vec![0.5, 0.3, 0.2], 2, 11).unwrap();
        let noise = NoiseModel::new(0.25).unwrap();
        let a = sample_under_noise(&f, &origin(2), noise, 20_000, 99).unwrap();
        let b = sample_under_noise(&f, &origin(2), noise, 20_000, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 20_000);
        let c = sample_under_noise(&f, &origin(2), noise, 20_000, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_never_emits_zero_probability_labels() {
        let f = SyntheticTabularClassifier::new(vec![0.0, 0.6, 0.0, 0.4, 0.0], 1, 3).unwrap();
        let counts =
            sample_under_noise(&f, &origin(1), NoiseModel::new(1.0).unwrap(), 50_000, 1).unwrap();
        assert_eq!(counts.get(0), 0);
        assert_eq!(counts.get(2), 0);
        assert_eq!(counts.get(4), 0);
        assert_eq!(counts.n(), 50_000);
    }

    #[test]
    fn binomial_concentration_across_seeds() {
        // counts[0]/n within 3 binomial standard deviations of 0.7 in at
        // least 99% of seeds.
        let f = SyntheticTabularClassifier::new(vec![0.7, 0.3], 1, 5).unwrap();
        let noise = NoiseModel::new(0.5).unwrap();
        let n = 100_000u64;
        let tol = 3.0 * (0.7_f64 * 0.3 / n as f64).sqrt();
        let runs = 200;
        let hits = (0..runs)
            .filter(|seed| {
                let counts = sample_under_noise(&f, &origin(1), noise, n, *seed).unwrap();
                (counts.get(0) as f64 / n as f64 - 0.7).abs() <= tol
            })
            .count();
        assert!(hits as f64 >= 0.99 * runs as f64, "{hits}/{runs}");
    }

    #[test]
    fn empirical_convergence_rate() {
        let p = [0.45, 0.3, 0.15, 0.1];
        let f = SyntheticTabularClassifier::new(p.to_vec(), 4, 17).unwrap();
        let noise = NoiseModel::new(0.5).unwrap();
        for (i, n) in [1_000u64, 10_000, 100_000].into_iter().enumerate() {
            let counts = sample_under_noise(&f, &origin(4), noise, n, 1000 + i as u64).unwrap();
            for (label, pi) in p.iter().enumerate() {
                let freq = counts.get(label) as f64 / n as f64;
                // 4 sigma per label keeps the family-wise false alarm rate
                // negligible across the 12 checks.
                let tol = 4.0 * (pi * (1.0 - pi) / n as f64).sqrt();
                assert!((freq - pi).abs() <= tol, "n={n} label={label}: {freq}");
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = ConstantClassifier::new(0, 2, 2).unwrap();
        let noise = NoiseModel::new(1.0).unwrap();
        assert!(matches!(
            sample_under_noise(&f, &origin(3), noise, 10, 0),
            Err(CertError::DimensionMismatch { .. })
        ));
        assert!(sample_under_noise(&f, &origin(2), noise, 0, 0).is_err());
        assert!(NoiseModel::new(0.0).is_err());
        assert!(NoiseModel::new(f64::NAN).is_err());
        assert!(ExamplePoint::new(vec![]).is_err());
        assert!(ExamplePoint::new(vec![f64::INFINITY]).is_err());
        assert!(SyntheticTabularClassifier::new(vec![0.5, 0.4], 1, 0).is_err());
        assert!(SyntheticTabularClassifier::new(vec![1.2, -0.2], 1, 0).is_err());
    }

    #[test]
    fn top_indices_orders_by_count() {
        let counts = CountVector::new(vec![5, 9, 1]).unwrap();
        assert_eq!(top_indices(&counts, 2, 0).unwrap(), vec![1, 0]);
        let counts = CountVector::new(vec![7, 0, 0]).unwrap();
        for seed in 0..50 {
            assert_eq!(top_indices(&counts, 3, seed).unwrap()[0], 0);
        }
        assert!(top_indices(&counts, 0, 0).is_err());
        assert!(top_indices(&counts, 4, 0).is_err());
    }

    #[test]
    fn top_indices_breaks_ties_uniformly() {
        let counts = CountVector::new(vec![4, 4]).unwrap();
        let trials = 10_000;
        let first = (0..trials)
            .filter(|seed| top_indices(&counts, 1, *seed).unwrap()[0] == 0)
            .count();
        let freq = first as f64 / trials as f64;
        assert!((freq - 0.5).abs() <= 0.05, "{freq}");
    }
}
