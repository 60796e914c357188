use std::path::PathBuf;

/// Errors raised anywhere in the clustering pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two operands (or an operand and an expectation) disagree in shape.
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// A value fell outside the mathematical domain of an operation.
    #[error("{op}: domain error: {detail}")]
    Domain { op: &'static str, detail: String },
    /// Input that makes an operation undefined (zero-norm rows and the like).
    #[error("{op}: degenerate input: {detail}")]
    Degenerate { op: &'static str, detail: String },
    /// A documented precondition or usage contract was broken.
    #[error("contract violation: {0}")]
    Contract(String),
    /// A hyperparameter or constructor argument is out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Binary or text file did not match its format.
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },
    /// Generator could not satisfy its geometric constraints.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// Run configuration problems, reported all at once.
    #[error("config error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
