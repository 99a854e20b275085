//! Error type shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, QpError>;

/// Coarse class used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Regime,
    Assertion,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("site budget exceeded: {needed} > {budget}")]
    Budget { needed: u128, budget: usize },
    #[error("regime: {0}")]
    Regime(String),
    #[error("singular block {block}: smallest singular value {sigma_min:e}")]
    Singular { block: String, sigma_min: f64 },
    #[error("nonresonance floor violated at site {site}: |E - v| = {gap:e} < {floor:e}")]
    Floor { site: String, gap: f64, floor: f64 },
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
}

impl QpError {
    pub fn class(&self) -> ErrorClass {
        match self {
            QpError::Invalid(_) => ErrorClass::Validation,
            QpError::Budget { .. } | QpError::Regime(_) | QpError::Floor { .. } => ErrorClass::Regime,
            QpError::Singular { .. } | QpError::Convergence(_) | QpError::Assertion(_) => {
                ErrorClass::Assertion
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            QpError::Invalid(_) => "invalid",
            QpError::Budget { .. } => "budget",
            QpError::Regime(_) => "regime",
            QpError::Singular { .. } => "singular",
            QpError::Floor { .. } => "floor",
            QpError::Convergence(_) => "convergence",
            QpError::Assertion(_) => "assertion",
        }
    }
}
