//! Certified top-k robustness for classifiers smoothed with isotropic
//! Gaussian noise.
//!
//! The pipeline mirrors how a certificate is produced in practice:
//!
//! 1. [`smoothing`] draws Monte Carlo samples of a base classifier under
//!    noise and counts the predicted labels.
//! 2. [`bounds`] turns counts into one-sided Clopper-Pearson bounds, either
//!    for the target label only (BinoCP) or simultaneously for every label
//!    with a Bonferroni correction (SimuEM).
//! 3. [`radius`] solves the certified-radius equation by bracketed bisection
//!    and returns a lower bound within `mu` of the exact root.
//! 4. [`predict`] implements abstaining top-k prediction.
//! 5. [`tightness`] builds the adversarial base classifier showing that the
//!    radius cannot be enlarged.
//! 6. [`harness`] batch-certifies datasets and emits accuracy curves.
//!
//! Labels are zero-based throughout.

pub mod bounds;
pub mod error;
pub mod harness;
pub mod predict;
pub mod radius;
pub mod smoothing;
pub mod special;
pub mod tightness;

pub use bounds::{
    binocp_bounds, estimate_bounds, prefix_upper_bounds, simuem_bounds, BoundMethod,
    PrefixUpperBounds, ProbabilityBounds,
};
pub use error::{CertError, Result};
pub use harness::{
    accuracy_lower_bound, certified_accuracy_curve, run_batch, AccuracyCurve,
    AccuracyLowerBoundInput, BatchOutput, CurvePoint, Dataset, DatasetExample, EvaluationConfig,
    ExampleResult,
};
pub use predict::{predict_from_counts, predict_topk, PredictionResult};
pub use radius::{
    certify, certify_bounds, equation_lhs, exact_radius, solve_radius_t, CertifyParams,
    RadiusCertificate, RadiusSolution, Saturation,
};
pub use smoothing::{
    sample_under_noise, top_indices, BaseClassifier, ConstantClassifier, CountVector, ExamplePoint,
    Label, NoiseModel, SyntheticTabularClassifier,
};
pub use special::{
    beta_quantile, binom_two_sided_pvalue, regularized_incomplete_beta, std_normal_cdf,
    std_normal_quantile, Probability,
};
pub use tightness::{
    construct_worst_case, is_consistent, measure_clean, measure_shifted, verify_violation,
    QuantileIntervalSet, ShiftRatio, WorstCaseClassifier,
};
