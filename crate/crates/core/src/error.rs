use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error taxonomy for the whole pipeline. The CLI maps `Config` and `Usage`
/// to exit code 2, everything else to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input files (bad JSON, bad CSV row, missing fields).
    #[error("parse error: {0}")]
    Parse(String),
    /// Cross-file referential integrity violations.
    #[error("integrity error: {0}")]
    Integrity(String),
    /// Invalid configuration or thresholds out of documented ranges.
    #[error("config error: {0}")]
    Config(String),
    /// Degenerate geometry where an operation requires a simple ring.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// Violated operation precondition (caller bug or unusable data).
    #[error("{0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-parseable code prefix used on CLI error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse(_) => "E_PARSE",
            Error::Integrity(_) => "E_INTEGRITY",
            Error::Config(_) => "E_CONFIG",
            Error::Geometry(_) => "E_GEOMETRY",
            Error::Invalid(_) => "E_INVALID",
            Error::Io(_) => "E_IO",
            Error::Json(_) => "E_JSON",
            Error::Csv(_) => "E_CSV",
        }
    }

    /// Exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 1,
        }
    }
}
