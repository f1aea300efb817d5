//! CSV and metadata files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::curve::AccuracyCurve;
use super::ExampleResult;
use crate::error::{CertError, Result};

pub const EXAMPLES_FILE: &str = "per_example.csv";
pub const CURVE_FILE: &str = "curve.csv";
pub const METADATA_FILE: &str = "metadata.json";

/// One row of the per-example CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRow {
    pub example_id: String,
    pub true_label: usize,
    /// 0 or 1.
    pub abstained: u8,
    pub radius_lower: f64,
    pub best_t: usize,
    pub n: u64,
    pub method: String,
}

impl ExampleRow {
    /// The certified radius, `None` on abstention.
    pub fn radius(&self) -> Option<f64> {
        (self.abstained == 0).then_some(self.radius_lower)
    }
}

impl From<&ExampleResult> for ExampleRow {
    fn from(r: &ExampleResult) -> Self {
        Self {
            example_id: r.example_id.clone(),
            true_label: r.true_label,
            abstained: u8::from(r.certificate.abstained),
            radius_lower: r.certificate.radius_lower,
            best_t: r.certificate.best_t,
            n: r.n,
            method: r.method.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CurveRow {
    radius: f64,
    approx_certified_topk_accuracy: f64,
    lemma8_lower_bound: Option<f64>,
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CertError + '_ {
    move |source| CertError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CertError + '_ {
    move |source| CertError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_example_csv(path: &Path, rows: &[ExampleRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_example_csv(path: &Path) -> Result<Vec<ExampleRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<ExampleRow>, _>>()
        .map_err(csv_err(path))
}

/// Curve rows to any writer, with the same columns as the curve file.
pub fn write_curve<W: std::io::Write>(writer: W, curve: &AccuracyCurve) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in &curve.points {
        w.serialize(CurveRow {
            radius: p.radius,
            approx_certified_topk_accuracy: p.accuracy,
            lemma8_lower_bound: p.lower_bound,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve_csv(path: &Path, curve: &AccuracyCurve) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_curve(std::io::BufWriter::new(file), curve).map_err(csv_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CertError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}
