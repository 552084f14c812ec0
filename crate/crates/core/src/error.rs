use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GadError>;

#[derive(Debug, Error)]
pub enum GadError {
    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label consistency: {0}")]
    Consistency(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("edge construction stopped at {achieved} edges (target {target})")]
    Construction { achieved: usize, target: usize },

    #[error("dimension {dim} has no observed values for category {category}")]
    DegenerateColumn { dim: usize, category: u8 },

    #[error("memory budget of {budget} bytes exceeded (peak {peak} bytes)")]
    BudgetExceeded { budget: u64, peak: u64 },

    #[error("run aborted: {0}")]
    Aborted(String),

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl GadError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            GadError::MissingFile(path)
        } else {
            GadError::Io { path, source }
        }
    }

    /// Short machine-readable tag used in CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            GadError::MalformedInput(_) => "malformed_input",
            GadError::Shape(_) => "shape",
            GadError::Consistency(_) => "consistency",
            GadError::Data(_) => "data",
            GadError::Argument(_) => "argument",
            GadError::Construction { .. } => "construction",
            GadError::DegenerateColumn { .. } => "degenerate_column",
            GadError::BudgetExceeded { .. } => "budget_exceeded",
            GadError::Aborted(_) => "aborted",
            GadError::MissingFile(_) => "missing_file",
            GadError::Io { .. } => "io",
            GadError::Json(_) => "json",
        }
    }

    /// Process exit code: 2 usage, 3 data, 4 budget, 5 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            GadError::Argument(_) => 2,
            GadError::MalformedInput(_)
            | GadError::Shape(_)
            | GadError::Consistency(_)
            | GadError::Data(_)
            | GadError::DegenerateColumn { .. }
            | GadError::MissingFile(_)
            | GadError::Json(_) => 3,
            GadError::BudgetExceeded { .. } | GadError::Aborted(_) => 4,
            GadError::Construction { .. } | GadError::Io { .. } => 5,
        }
    }
}
