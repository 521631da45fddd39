use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite state at t = {t} on node {node}")]
    Divergence { t: f64, node: usize },

    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("quadrature did not converge: achieved error estimate {estimate:e}")]
    Accuracy { estimate: f64 },

    #[error("step h = {h:e} too coarse for the oscillation; need h <= {required:e}")]
    StepTooCoarse { h: f64, required: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got })
        }
    }
}
