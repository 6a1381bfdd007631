use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// One entry per violated constraint.
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("negative power {power} applied to a field with non-zero constant mode")]
    NegativePowerOnZeroMode { power: f64 },

    #[error("coefficient vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error("kappa schedule exhausted at t = {time} with linear fallback disabled")]
    ScheduleExhausted { time: f64 },

    #[error("no convergence after {} iterations, last residual {:e}", .residuals.len(), .residuals.last().copied().unwrap_or(f64::NAN))]
    NoConvergence { residuals: Vec<f64> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(vec![msg.into()])
    }
}
