use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("unknown record id `{0}`")]
    UnknownId(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model is not fitted: {0}")]
    Unfitted(&'static str),
    #[error("feature width mismatch: expected {expected}, got {got}")]
    FeatureWidth { expected: usize, got: usize },
    #[error("training data contains a single class only")]
    SingleClass,
    #[error("instance too large for exhaustive search ({0} assignments); use the greedy solver")]
    TooLarge(u128),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported model file version {0}")]
    ModelVersion(u32),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than by the program.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Schema(_)
                | Error::DuplicateId(_)
                | Error::UnknownId(_)
                | Error::InvalidInput(_)
                | Error::SingleClass
                | Error::ModelVersion(_)
        )
    }
}
