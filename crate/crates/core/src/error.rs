use std::path::PathBuf;

/// Errors produced by the diagnostics toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("rate for modality {index} is {value}; rates must lie in [0, 1)")]
    InvalidRate { index: usize, value: f64 },

    #[error("at least {min} modalities are required, got {got}")]
    TooFewModalities { min: usize, got: usize },

    #[error("{got} modalities exceed the supported maximum of {max}")]
    TooManyModalities { max: usize, got: usize },

    #[error("duplicate modality name `{0}`")]
    DuplicateName(String),

    #[error("invalid mask pattern: {0}")]
    InvalidPattern(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("dataset must contain at least one sample")]
    EmptyDataset,

    #[error("ablation table is missing combinations: {}", .missing.join(", "))]
    IncompleteTable { missing: Vec<String> },

    #[error("invalid ablation table: {0}")]
    InvalidTable(String),

    #[error("all modality contributions are zero; contribution distribution is undefined")]
    DegenerateContribution,

    #[error("incomplete gradient trace: {0}")]
    IncompleteTrace(String),

    #[error("gradient trace needs at least 2 steps, got {0}")]
    InsufficientTrace(usize),

    #[error("invalid gradient trace: {0}")]
    InvalidTrace(String),

    #[error("conflicting duplicate gradient sample at step {step}, modality {modality}, module {module}")]
    DuplicateSample {
        step: u64,
        modality: usize,
        module: usize,
    },

    #[error("invalid configuration field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
