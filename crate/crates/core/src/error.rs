use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid value: {0}")]
    Value(String),

    #[error("morphology probabilities sum to {sum}, outside renormalization tolerance")]
    Normalization { sum: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("empty confusion matrix")]
    EmptyMatrix,

    #[error("empty test set")]
    EmptyTestSet,

    #[error("incomplete feedback record for case {0}")]
    IncompleteRecord(String),

    #[error("pipeline stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration rather than by the
    /// environment. The CLI maps these to exit code 1.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::Value(_)
            | Error::Normalization { .. }
            | Error::Config(_)
            | Error::Dimension { .. }
            | Error::CorruptModel(_)
            | Error::EmptyMatrix
            | Error::EmptyTestSet
            | Error::IncompleteRecord(_)
            | Error::Json(_)
            | Error::Csv(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            Error::Divergence { .. } | Error::Io { .. } => false,
        }
    }
}
