use thiserror::Error;

#[derive(Debug, Error)]
pub enum RieError {
    #[error("point {re}{im:+}i lies on the real support of the measure")]
    Domain { re: f64, im: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: String, actual: String },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Solver {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RieError>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(RieError::Argument(msg.into()))
}
