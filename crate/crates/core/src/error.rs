use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infinite IPCW weight at horizon {horizon}: censoring survival is zero before a complete case")]
    InfiniteWeight { horizon: f64 },

    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("estimating equation did not converge after {iterations} iterations (final norm {norm:e})")]
    NonConvergence { iterations: usize, norm: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("simulation harness: {failed} of {total} replications failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
