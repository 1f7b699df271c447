use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("singular value decomposition did not converge")]
    SvdFailed,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("support pattern is empty")]
    EmptySupport,

    #[error("{what} must be nonzero")]
    ZeroMatrix { what: &'static str },

    #[error("basis is not orthonormal (max deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("solver produced non-finite values at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
