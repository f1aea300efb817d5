use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the certification library.
#[derive(Debug, Error)]
pub enum CertError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("label {label} out of range for {num_labels} labels")]
    LabelOutOfRange { label: usize, num_labels: usize },

    #[error("dimension mismatch: classifier expects {expected}, point has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("infeasible bounds: {0}")]
    InfeasibleBounds(String),

    #[error("worst-case construction failed: {0}")]
    Construction(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = CertError> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> CertError {
    CertError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
