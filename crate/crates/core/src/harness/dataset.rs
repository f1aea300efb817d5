use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CertError, Result};
use crate::smoothing::{
    derive_seed, ExamplePoint, Label, SyntheticTabularClassifier, ROW_SUM_TOLERANCE,
};

/// Tag mixed into per-example classifier salts.
const SALT_TAG: u64 = 0x7361_6c74;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetExample {
    pub id: String,
    /// Defaults to the most probable label when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_label: Option<Label>,
    /// Smoothed label probabilities of the synthetic classifier at this
    /// example.
    pub probabilities: Vec<f64>,
    /// Defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

/// Examples backed by synthetic classifiers with known probabilities.
///
/// ```json
/// {"num_labels": 3, "dimension": 2,
///  "examples": [{"id": "a", "true_label": 0, "probabilities": [0.7, 0.2, 0.1]}]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub num_labels: usize,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    pub examples: Vec<DatasetExample>,
}

fn default_dimension() -> usize {
    1
}

impl Dataset {
    pub fn from_json_str(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CertError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let dataset = Self::from_json_str(&text).map_err(|source| CertError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CertError::Dataset(msg));
        if self.num_labels < 2 {
            return bad(format!(
                "num_labels must be at least 2, got {}",
                self.num_labels
            ));
        }
        if self.dimension == 0 {
            return bad("dimension must be at least 1".into());
        }
        if self.examples.is_empty() {
            return bad("no examples".into());
        }
        for ex in &self.examples {
            if ex.probabilities.len() != self.num_labels {
                return bad(format!(
                    "example `{}` has {} probabilities, expected {}",
                    ex.id,
                    ex.probabilities.len(),
                    self.num_labels
                ));
            }
            if ex
                .probabilities
                .iter()
                .any(|p| !(*p >= 0.0 && p.is_finite()))
            {
                return bad(format!(
                    "example `{}` has a negative or non-finite probability",
                    ex.id
                ));
            }
            let total: f64 = ex.probabilities.iter().sum();
            if (total - 1.0).abs() > ROW_SUM_TOLERANCE {
                return bad(format!("example `{}` probabilities sum to {total}", ex.id));
            }
            if let Some(l) = ex.true_label {
                if l >= self.num_labels {
                    return bad(format!(
                        "example `{}` has true_label {l} out of range",
                        ex.id
                    ));
                }
            }
            if let Some(f) = &ex.features {
                if f.len() != self.dimension {
                    return bad(format!(
                        "example `{}` has {} features, expected {}",
                        ex.id,
                        f.len(),
                        self.dimension
                    ));
                }
            }
        }
        Ok(())
    }
}

impl DatasetExample {
    /// The label to certify: the given truth, else the most probable label
    /// (lowest index on ties).
    pub fn label(&self) -> Label {
        self.true_label.unwrap_or_else(|| {
            let mut best = 0;
            for (i, p) in self.probabilities.iter().enumerate() {
                if *p > self.probabilities[best] {
                    best = i;
                }
            }
            best
        })
    }

    pub fn point(&self, dimension: usize) -> Result<ExamplePoint> {
        match &self.features {
            Some(f) => ExamplePoint::new(f.clone()),
            None => ExamplePoint::zeros(dimension),
        }
    }

    /// Synthetic classifier realising this example's probabilities. The
    /// salt depends only on the example's position in the dataset.
    pub fn classifier(&self, index: usize, dimension: usize) -> Result<SyntheticTabularClassifier> {
        SyntheticTabularClassifier::new(
            self.probabilities.clone(),
            dimension,
            derive_seed(SALT_TAG, index as u64),
        )
    }
}
