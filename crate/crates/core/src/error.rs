use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("graph is not acyclic: edge {src} -> {dst} lies on a cycle")]
    Cycle { src: usize, dst: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular normal matrix ({0}); use a ridge > 0")]
    Singular(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("non-finite loss: {0}")]
    NonFinite(f64),

    #[error("metric undefined: target of sample {sample} has zero norm")]
    ZeroNormTarget { sample: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the category this error belongs to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Param(_) | Error::Cycle { .. } | Error::Shape(_) | Error::Parse { .. } => 2,
            Error::Singular(_)
            | Error::Divergence { .. }
            | Error::NonFinite(_)
            | Error::ZeroNormTarget { .. } => 3,
            Error::Io(_) | Error::Csv(_) => 4,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
