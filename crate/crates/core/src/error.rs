use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("no active treatment arms to randomize to")]
    NoArms,

    #[error("logic error: {0}")]
    Logic(String),

    #[error(transparent)]
    Analysis(#[from] AnalysisError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("output directory {0} exists and is not empty (use --force to overwrite)")]
    OutputNotEmpty(PathBuf),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("scenario {scenario}: {failed} of {total} replicates failed, exceeding the failure budget")]
    FailureBudget {
        scenario: String,
        failed: usize,
        total: usize,
    },

    #[error("report error: {0}")]
    Report(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures of a single ANCOVA fit. These are recorded per replicate and do
/// not abort a run unless they exceed the failure budget.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("design matrix is rank deficient in column `{0}`")]
    RankDeficient(&'static str),

    #[error("degenerate fit: zero residual variance and zero treatment effect")]
    Degenerate,

    #[error("not enough observations: {rows} rows for {params} parameters")]
    InsufficientData { rows: usize, params: usize },

    #[error("dataset must contain both treatment and control rows")]
    MissingGroup,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}
