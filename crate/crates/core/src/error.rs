use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid grouping: {0}")]
    Grouping(String),

    #[error(
        "insufficient history for a {length}-date window; earliest feasible start is {earliest}"
    )]
    Window { length: usize, earliest: NaiveDate },

    #[error("insufficient history: dataset has {available} dates, a {length}-date window needs at least {}", .length + 1)]
    NoHistory { length: usize, available: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("quadrature did not converge (achieved error estimate {achieved:.3e})")]
    Quadrature { achieved: f64 },

    #[error("invalid setup: {0}")]
    Setup(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("evaluation cases differ between runs: {0}")]
    Comparability(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures that originate in the numerics rather than the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Degenerate(_)
                | Error::Quadrature { .. }
                | Error::Setup(_)
                | Error::Fit(_)
        )
    }
}
