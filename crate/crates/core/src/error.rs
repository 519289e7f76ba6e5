use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PanError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PanError {
    #[error("invalid shape in {op}: {lhs:?} vs {rhs:?}")]
    InvalidShape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{}: malformed entries: {}", path.display(), .entries.join("; "))]
    Manifest { path: PathBuf, entries: Vec<String> },

    #[error("no query has a valid relevant gallery item")]
    EmptyProtocol,

    #[error("non-finite loss at stage {stage}, epoch {epoch}")]
    Divergence { stage: u8, epoch: usize },
}

impl PanError {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        PanError::InvalidShape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        PanError::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PanError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        PanError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
