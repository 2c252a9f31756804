use std::io;

use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} samples, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("frequency {omega} outside (-sqrt(m), sqrt(m)) with m = {m}")]
    FrequencyOutOfRange { omega: f64, m: f64 },

    #[error("domain too small: profile tail ratio {tail_ratio:.3e} exceeds {limit:.1e}")]
    DomainTooSmall { tail_ratio: f64, limit: f64 },

    #[error("shooting failed: {0}")]
    ShootingFailure(String),

    #[error("field is not finite")]
    NonFinite,

    #[error("blow-up detected at t = {time} (sup|u1| = {sup})")]
    BlowUp { time: f64, sup: f64 },

    #[error("Nehari projection undefined: nonlinear part vanishes")]
    NoProjection,

    #[error("cutoffs need t > 0, got {0}")]
    NonPositiveTime(f64),

    #[error("count mismatch: {what} ({expected} expected, {found} given)")]
    CountMismatch { what: &'static str, expected: usize, found: usize },

    #[error("assembled operator not symmetric: correction {0:.3e}")]
    Asymmetric(f64),

    #[error("eigensolve failed: {0}")]
    Eigen(String),

    #[error("modulation left the tube{}: {reason}", time.map(|t| format!(" at t = {t}")).unwrap_or_default())]
    NotInTube { time: Option<f64>, reason: String },

    #[error("degenerate soliton configuration: Jacobian condition number {0:.3e}")]
    Degenerate(f64),

    #[error("configuration syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("unsupported field dump version `{0}`")]
    UnsupportedVersion(String),

    #[error("malformed field dump header: {0}")]
    Header(String),

    #[error("truncated payload: expected {expected} bytes, got {found}")]
    Truncated { expected: usize, found: usize },

    #[error("malformed CSV on line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// True for failures that come from the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. }
                | Error::NonFinite
                | Error::NotInTube { .. }
                | Error::Degenerate(_)
                | Error::Eigen(_)
                | Error::ShootingFailure(_)
                | Error::NoProjection
                | Error::Asymmetric(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
