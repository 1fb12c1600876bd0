use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure classes, used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Malformed input: bad dimensions, invalid JSON, violated invariants.
    Config,
    /// A structural assumption of the problem fails (no stabilizing
    /// solution, finite escape, infeasible mean field path).
    Infeasible,
    /// A numerical procedure broke down.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(ValidationReport),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("blow-up at t = {t}: ‖X‖_max = {norm:e} exceeds cap {cap:e}")]
    BlowUp { t: f64, norm: f64, cap: f64 },

    #[error("imaginary-axis eigenvalue: min |Re λ| = {min_re:e} within tolerance {tol:e}")]
    ImaginaryAxisEigenvalue { min_re: f64, tol: f64 },

    #[error("M3 split invalid: stable subspace has dimension {found}, expected {expected}")]
    StableSubspaceDimension { found: usize, expected: usize },

    #[error("L1 singular: condition number {cond:e}")]
    SingularL1 { cond: f64 },

    #[error("not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("A5 violated: {0}")]
    FiniteHorizonUnsolvable(String),

    #[error("infeasible x̄ unless x̄(0) = {required:?}")]
    InfeasibleMeanField { required: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidModel(_)
            | Error::Dimension(_)
            | Error::GridMismatch(_)
            | Error::Unsupported(_)
            | Error::Precondition(_)
            | Error::Config(_)
            | Error::Io(_)
            | Error::Json(_) => ErrorCategory::Config,
            Error::BlowUp { .. }
            | Error::ImaginaryAxisEigenvalue { .. }
            | Error::StableSubspaceDimension { .. }
            | Error::SingularL1 { .. }
            | Error::NotStabilizable(_)
            | Error::FiniteHorizonUnsolvable(_)
            | Error::InfeasibleMeanField { .. } => ErrorCategory::Infeasible,
            Error::Instability(_) | Error::Singular(_) => ErrorCategory::Numerical,
        }
    }
}
