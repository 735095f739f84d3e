use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("budget too small: {budget} s cannot fit one segment of {segment} s")]
    BudgetTooSmall { budget: f64, segment: f64 },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    /// Training produced a non-finite loss or parameter.
    #[error("numeric divergence: {0}")]
    Divergence(String),

    #[error("singular system: {0}")]
    Singular(String),

    /// A file parsed but did not match the expected layout or version.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("png error: {0}")]
    Png(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
