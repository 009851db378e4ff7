use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular map: determinant {det:e} is within {tol:e} of zero")]
    SingularMap { det: f64, tol: f64 },

    #[error("optimizer made no progress on any of {restarts} restarts (best cost {best_cost})")]
    NoProgress {
        restarts: usize,
        best_cost: f64,
        best: Box<crate::optimizer::Solution>,
    },

    #[error("image format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
