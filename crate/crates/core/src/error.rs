use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed EDF header at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("channel {0:?} not found")]
    ChannelNotFound(String),

    #[error("truncated EDF data: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("sample {index} ({value}) outside representable range [{min}, {max}]")]
    Range {
        index: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid profile field `{field}`: {message}")]
    Profile { field: &'static str, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("usage: {0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn insufficient(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }

    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 usage, 3 data or format, 4 insufficient data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::InsufficientData(_) => 4,
            Error::File { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
