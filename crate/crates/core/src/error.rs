use thiserror::Error;

/// Errors raised by fitting, evaluation and data validation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    /// Input violates a structural invariant (shape, range, label bounds).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Input values are non-finite where finite values are required.
    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    /// Not enough samples for the requested operation.
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Input is degenerate for the requested fit (e.g. all logits identical).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// An optimizer failed to reach a valid solution.
    #[error("fit failed: {0}")]
    FitFailure(String),
}

impl CalibError {
    /// True for errors caused by the fitting procedure rather than malformed data.
    pub fn is_fit_failure(&self) -> bool {
        matches!(
            self,
            CalibError::Degenerate(_) | CalibError::FitFailure(_) | CalibError::InsufficientData { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, CalibError>;
