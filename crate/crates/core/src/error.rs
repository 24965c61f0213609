use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("inconsistent points {i} and {j}: {reason}")]
    Inconsistent { i: usize, j: usize, reason: String },

    #[error("interpolation did not reach tolerance {tol:e}: residual {residual:e} at sharpness {lambda:e}")]
    Convergence { residual: f64, lambda: f64, tol: f64 },

    #[error("transform precondition failed: {0}")]
    Transform(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported model version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("training aborted at epoch {epoch}, batch {batch}: loss is {loss}")]
    NumericAbort { epoch: usize, batch: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            got,
        }
    }

    /// True for failures caused by the input data or documents rather than by
    /// numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Data(_)
                | Error::Inconsistent { .. }
                | Error::Parse { .. }
                | Error::Version { .. }
                | Error::Io(_)
        )
    }

    pub fn is_numeric_error(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_) | Error::NumericAbort { .. } | Error::Convergence { .. }
        )
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::dim(context, expected, got))
    }
}
