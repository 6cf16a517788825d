//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("mode index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("enumeration budget exceeded: more than {cap} tuples for {context}")]
    BudgetExceeded { cap: u64, context: String },

    #[error("small divisor {divisor:.6e} below floor {floor:.6e} at index {index}")]
    SmallDivisor {
        divisor: f64,
        floor: f64,
        index: String,
    },

    #[error("step size collapsed at t={t:.6e}; state left the integrable ball")]
    StepCollapse { t: f64 },

    #[error("non-finite state encountered at t={t:.6e}")]
    NonFinite { t: f64 },

    #[error("fixed-point kick failed to converge (residual {residual:.3e})")]
    KickDiverged { residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error in field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }

    /// Exit code for the CLI: 1 validation, 2 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SmallDivisor { .. }
            | Error::StepCollapse { .. }
            | Error::NonFinite { .. }
            | Error::KickDiverged { .. } => 2,
            _ => 1,
        }
    }
}
