use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChoreoError {
    #[error("state outside the admissible domain: {0}")]
    DomainViolation(String),
    #[error("collision: {0}")]
    Collision(String),
    #[error("no motion possible: {0}")]
    NoMotion(String),
    #[error("integration blow-up at t = {time}: {detail}")]
    BlowUp { time: f64, detail: String },
    #[error("derivative of order {order} requested at a non-smooth point {at}; pass a one-sided flag")]
    Smoothness { order: usize, at: f64 },
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("near-tangential impact: {0}")]
    Tangency(String),
    #[error("maximum time exceeded: {0}")]
    MaxTime(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, ChoreoError>;
