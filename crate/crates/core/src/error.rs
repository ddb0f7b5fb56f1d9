use thiserror::Error;

/// Errors raised by the solver.
///
/// The variants split into configuration problems (bad inputs, detected
/// before any time stepping) and numerical failures (detected while
/// stepping). The CLI maps them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum HosfError {
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("size mismatch: expected {expected} values, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range for {len} orbitals")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite value in orbital {orbital} at step {step}")]
    NonFinite { orbital: usize, step: usize },

    #[error(
        "Picard iteration did not converge in {iterations} iterations \
         (last increment {residual:.3e}); reduce dt"
    )]
    PicardDivergence { iterations: usize, residual: f64 },

    #[error("decay fit refused: {0}")]
    DecayFit(String),

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HosfError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        HosfError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for failures that happen while integrating, as opposed to
    /// invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            HosfError::NonFinite { .. } | HosfError::PicardDivergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, HosfError>;
