//! Error taxonomy shared across the toolkit.
//!
//! Variants map onto the CLI exit codes: config errors exit 2, chain
//! failures exit 3, combiner failures exit 4, and a missing reference
//! exits 5. Everything else is an internal error (exit 1).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("chain: {0}")]
    Chain(String),

    #[error("combine: {0}")]
    Combine(String),

    /// Rejection starved: fewer accepted draws than the configured minimum.
    #[error("combine: rejection starved ({accepted} accepted, minimum {minimum})")]
    Starvation { accepted: usize, minimum: usize },

    /// Subset conditionals share no overlap; the product density underflows.
    #[error("combine: subset posteriors disconnected ({0})")]
    Disconnected(String),

    /// The requested grid loses transformed mass off its ends.
    #[error("kernel: grid too narrow, {lost:.3e} of transformed mass lost")]
    GridTooNarrow { lost: f64 },

    #[error("reference: {0}")]
    MissingReference(String),

    #[error("numeric: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Chain(_) => 3,
            Error::Combine(_)
            | Error::Starvation { .. }
            | Error::Disconnected(_)
            | Error::GridTooNarrow { .. } => 4,
            Error::MissingReference(_) => 5,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
