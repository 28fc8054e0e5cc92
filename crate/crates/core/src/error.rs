use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("{kind} degree {degree} outside [{lo}, {hi}]")]
    DegreeOutOfRange {
        kind: &'static str,
        degree: f64,
        lo: f64,
        hi: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("record for `{0}` has no true class")]
    MissingTrueClass(String),

    #[error("missing {what} for `{id}`")]
    Missing { what: &'static str, id: String },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Invalid { .. } | Error::DegreeOutOfRange { .. } => "validation",
            Error::Degenerate(_) => "degenerate",
            Error::MissingTrueClass(_) | Error::Missing { .. } => "missing",
            Error::Empty(_) => "empty",
            Error::Diverged { .. } => "diverged",
            Error::Parse { .. } => "parse",
            Error::Io { .. } | Error::Image { .. } => "io",
        }
    }
}
