use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can report.
///
/// Variants map one-to-one onto the failure kinds each stage documents, so
/// callers (and the CLI's machine-readable error record) can match on them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("segmentation failed{}: found {found} peaks, expected {expected}", key_suffix(.key))]
    Segmentation {
        key: Option<String>,
        found: usize,
        expected: usize,
    },

    #[error("missing recordings for keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("corpus has {available} {stratum} sentences, {requested} requested")]
    InsufficientCorpus {
        stratum: &'static str,
        available: usize,
        requested: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("character {0:?} is outside the keystroke alphabet")]
    Alphabet(char),

    #[error("training diverged at stage {stage}, step {step}: loss is not finite")]
    Divergence { stage: usize, step: usize },

    #[error("bracket does not contain target {target}: accuracy {low_accuracy} at eta {low_eta}, {high_accuracy} at eta {high_eta}")]
    Bracket {
        target: f64,
        low_eta: f64,
        high_eta: f64,
        low_accuracy: f64,
        high_accuracy: f64,
    },

    #[error(
        "calibration did not reach tolerance after {} iterations (best eta {}, accuracy {})",
        .0.iterations, .0.eta, .0.achieved_accuracy
    )]
    NonConvergence(Box<crate::calibration::CalibrationResult>),

    #[error("backend timed out: {0}")]
    BackendTimeout(String),

    #[error("malformed backend response: {0}")]
    BackendProtocol(String),

    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

fn key_suffix(key: &Option<String>) -> String {
    key.as_ref()
        .map(|k| format!(" for key {k:?}"))
        .unwrap_or_default()
}

impl Error {
    /// Stable short name used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Segmentation { .. } => "segmentation",
            Error::MissingKeys(_) => "missing_keys",
            Error::InsufficientCorpus { .. } => "insufficient_corpus",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Alphabet(_) => "alphabet",
            Error::Divergence { .. } => "divergence",
            Error::Bracket { .. } => "bracket",
            Error::NonConvergence(_) => "non_convergence",
            Error::BackendTimeout(_) => "backend_timeout",
            Error::BackendProtocol(_) => "backend_protocol",
            Error::RateLimited { .. } => "rate_limited",
            Error::Config(_) => "config",
            Error::Format { .. } => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Wav(_) => "wav",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
