use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of a model function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value, schedule or scenario is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// One or more schedule constraints are violated.
    #[error("constraint violations: {}", .0.join("; "))]
    Constraints(Vec<String>),

    #[error("integration failed at t = {t:.4} h: {reason}")]
    Integration { t: f64, reason: String },

    #[error("no convergence after {iterations} iterations (last mismatch {mismatch:.3e})")]
    NonConvergence { iterations: usize, mismatch: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Integration { .. } | Error::NonConvergence { .. } | Error::DegenerateFit(_)
        )
    }

    pub(crate) fn integration(t: f64, reason: impl Into<String>) -> Self {
        Error::Integration {
            t,
            reason: reason.into(),
        }
    }
}
