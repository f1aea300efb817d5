//! Dataset-level certification, accuracy curves and output files.

mod curve;
mod dataset;
pub mod io;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use curve::{
    accuracy_lower_bound, certified_accuracy_curve, uniform_grid, AccuracyCurve,
    AccuracyLowerBoundInput, CurvePoint,
};
pub use dataset::{Dataset, DatasetExample};

use crate::bounds::BoundMethod;
use crate::error::{CertError, Result};
use crate::radius::{certify, CertifyParams, RadiusCertificate, DEFAULT_MU};
use crate::smoothing::{derive_seed, Label, NoiseModel, GENERATOR};

pub const DEFAULT_RHO: f64 = 0.001;
pub const DEFAULT_GRID_MAX: f64 = 2.0;
pub const DEFAULT_GRID_STEP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub sigma: f64,
    pub k: usize,
    pub n: u64,
    pub alpha: f64,
    pub mu: f64,
    pub method: BoundMethod,
    pub seed: u64,
    /// Ascending radii at which the curve is evaluated.
    pub grid: Vec<f64>,
    /// Failure probability of the curve's lower bound.
    pub rho: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            sigma: 0.5,
            k: 3,
            n: 100_000,
            alpha: 0.001,
            mu: DEFAULT_MU,
            method: BoundMethod::SimuEm,
            seed: 0,
            grid: uniform_grid(DEFAULT_GRID_MAX, DEFAULT_GRID_STEP).expect("default grid is valid"),
            rho: DEFAULT_RHO,
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        NoiseModel::new(self.sigma)?;
        curve::check_grid(&self.grid)?;
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(crate::error::invalid(
                "rho",
                format!("must lie in (0, 1), got {}", self.rho),
            ));
        }
        Ok(())
    }

    /// Certification parameters for the example at `index`.
    pub fn params_for(&self, index: usize) -> Result<CertifyParams> {
        Ok(CertifyParams {
            k: self.k,
            noise: NoiseModel::new(self.sigma)?,
            n: self.n,
            alpha: self.alpha,
            mu: self.mu,
            method: self.method,
            seed: derive_seed(self.seed, index as u64),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub example_id: String,
    pub true_label: Label,
    pub certificate: RadiusCertificate,
    pub n: u64,
    pub method: BoundMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutput {
    pub results: Vec<ExampleResult>,
    pub curve: AccuracyCurve,
}

#[derive(Debug, Clone, Serialize)]
struct Metadata<'a> {
    generator: &'a str,
    version: &'a str,
    examples: usize,
    config: &'a EvaluationConfig,
}

/// Certifies every example in parallel and builds the accuracy curve.
///
/// Each example uses a seed derived from `config.seed` and its index, so
/// results do not depend on scheduling.
pub fn run_batch(config: &EvaluationConfig, dataset: &Dataset) -> Result<BatchOutput> {
    config.validate()?;
    dataset.validate()?;
    if config.k == 0 || config.k >= dataset.num_labels {
        return Err(crate::error::invalid(
            "k",
            format!(
                "must lie in 1..={}, got {}",
                dataset.num_labels - 1,
                config.k
            ),
        ));
    }
    let results = dataset
        .examples
        .par_iter()
        .enumerate()
        .map(|(index, ex)| {
            let f = ex.classifier(index, dataset.dimension)?;
            let x = ex.point(dataset.dimension)?;
            let label = ex.label();
            let certificate = certify(&f, &x, label, &config.params_for(index)?)?;
            Ok(ExampleResult {
                example_id: ex.id.clone(),
                true_label: label,
                certificate,
                n: config.n,
                method: config.method,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let radii: Vec<Option<f64>> = results.iter().map(|r| r.certificate.radius()).collect();
    let curve = certified_accuracy_curve(&radii, &config.grid, Some((config.alpha, config.rho)))?;
    Ok(BatchOutput { results, curve })
}

impl BatchOutput {
    /// Writes the per-example CSV, the curve CSV and run metadata into
    /// `dir`, creating it if needed.
    pub fn write(&self, dir: &Path, config: &EvaluationConfig) -> Result<()> {
        fs::create_dir_all(dir).map_err(|source| CertError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let rows: Vec<io::ExampleRow> = self.results.iter().map(io::ExampleRow::from).collect();
        io::write_example_csv(&dir.join(io::EXAMPLES_FILE), &rows)?;
        io::write_curve_csv(&dir.join(io::CURVE_FILE), &self.curve)?;
        io::write_json(
            &dir.join(io::METADATA_FILE),
            &Metadata {
                generator: GENERATOR,
                version: env!("CARGO_PKG_VERSION"),
                examples: self.results.len(),
                config,
            },
        )
    }
}
