use thiserror::Error;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("Fock truncation {truncation} leaves tail mass {tail:.3e} (limit {limit:.1e})")]
    TruncationInsufficient {
        truncation: usize,
        tail: f64,
        limit: f64,
    },

    #[error("no stable equilibrium found for shift voltage {voltage} V")]
    NoEquilibrium { voltage: f64 },

    #[error("{count} stable equilibria found for shift voltage {voltage} V")]
    MultipleEquilibria { voltage: f64, count: usize },

    #[error("fit did not converge after {iterations} iterations: {reason}")]
    NonConvergence { iterations: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
