use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violates a precondition of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// The iteration produced a non-finite value.
    #[error("solver diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("tau calibration failed: no tau in [{lo}, {hi}] zeroes chi on pure noise")]
    CalibrationFailed { lo: f64, hi: f64 },

    #[error("oracle size cap exceeded: {0}")]
    SizeCap(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Numerical failures map to a different CLI exit code than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::CalibrationFailed { .. }
        )
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
