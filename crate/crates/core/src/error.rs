use thiserror::Error;

/// Errors raised by rcmkit operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("target unreachable: {limit} limit violated (value {value})")]
    Unreachable { limit: &'static str, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Iterative solver ran out of iterations; `best` holds the best iterate found.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("ill-posed problem, suspect parameters: {}", .suspects.join(", "))]
    IllPosed { suspects: Vec<String> },

    #[error("solver diverged: {0}")]
    Diverged(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("rank-deficient: {0}")]
    RankDeficient(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::IllPosed { .. }
                | Error::Diverged(_)
                | Error::RankDeficient(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
