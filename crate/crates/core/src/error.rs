use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("budget infeasible at iteration {iteration}: minimal achievable cost {min_cost:.6} exceeds 1")]
    Infeasible { iteration: usize, min_cost: f64 },

    #[error("half-space projection infeasible: smallest constraint expectation {min_expectation:.6} exceeds 1")]
    ProjectionInfeasible { min_expectation: f64 },

    #[error("horizon mismatch: dataset has T={dataset}, configuration expects T={config}")]
    HorizonMismatch { dataset: usize, config: usize },

    #[error("enumeration of {count} trajectories exceeds the cap of {cap}")]
    EnumerationCap { count: f64, cap: usize },

    #[error("dataset parse error at line {line}: {msg}")]
    DatasetParse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }
}
