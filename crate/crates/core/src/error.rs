use std::path::PathBuf;

use crate::losses::LossBreakdown;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition of an operation did not hold (shapes, ranges, indices).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("registration error: pre-change image is {pre}, post-change image is {post}")]
    Registration { pre: String, post: String },

    #[error("insufficient samples: {samples} samples cannot determine a {dim}-dimensional mapping")]
    InsufficientSamples { samples: usize, dim: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("weight archive: {0}")]
    Archive(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite loss at iteration {iteration} ({breakdown})")]
    NonFiniteLoss {
        iteration: usize,
        breakdown: LossBreakdown,
    },

    #[error("AUC is undefined when the reference contains a single class")]
    UndefinedAuc,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Returns `Error::Contract` with a formatted message unless `cond` holds.
#[macro_export]
#[doc(hidden)]
macro_rules! contract {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::Error::Contract(format!($($arg)+)));
        }
    };
}
