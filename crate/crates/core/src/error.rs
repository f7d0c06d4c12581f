use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid year {0}, expected 1..=5")]
    InvalidYear(i64),

    #[error("no episode in progress; call reset first")]
    EpisodeNotStarted,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid value for {name}: {value}")]
    InvalidValue { name: &'static str, value: f64 },

    #[error("kernel matrix factorization failed (jitter reached {jitter:e})")]
    Factorization { jitter: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("algorithm `{algo}` is not applicable to the {formulation} formulation")]
    Incompatible { algo: String, formulation: String },

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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
