use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no CR found: {0}")]
    NoCrFound(String),

    #[error("undefined center: {0}")]
    UndefinedCenter(String),

    #[error("shape mismatch at layer {layer}: {detail}")]
    ShapeMismatch { layer: usize, detail: String },

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("unsupported model version {found} (supported: {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("rank-deficient design matrix: rank {rank} of {columns} ({detail})")]
    RankDeficient {
        rank: usize,
        columns: usize,
        detail: String,
    },

    #[error("training diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        report: Box<crate::train::TrainReport>,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
