use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("elliptic solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("CFL violation: dt = {dt:e} exceeds limit {limit:e}; suggested dt = {suggested:e}")]
    Cfl { dt: f64, limit: f64, suggested: f64 },
    #[error("non-finite value detected in {stage} at t = {time}")]
    NonFinite { stage: String, time: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("missing run data: {0}")]
    MissingData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
