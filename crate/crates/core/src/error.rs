use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no training frames")]
    NoTrainingFrames,

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("could not decode frame {index}: {reason}")]
    Decode { index: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("undefined cosine: zero-norm latent code")]
    UndefinedCosine,

    #[error("AUC undefined: labels contain a single class")]
    AucUndefined,

    #[error("non-finite loss in {term} term")]
    NonFiniteLoss { term: &'static str },

    #[error("training diverged at epoch {epoch}; last good checkpoint: {last_good:?}")]
    Diverged {
        epoch: usize,
        last_good: Option<PathBuf>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{0}")]
    Invalid(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}
