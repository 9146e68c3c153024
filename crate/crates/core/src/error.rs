use thiserror::Error;

/// Errors raised by the analysis, simulation and oracle routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violates the operation's precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// A real-valued argument lies outside the function's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical procedure failed to produce a result.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// A root-finding bracket does not enclose a sign change.
    #[error("bracket [{lo}, {hi}] does not enclose a sign change")]
    Bracket { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
