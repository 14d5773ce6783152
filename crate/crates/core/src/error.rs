//! Error type shared across the engine.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A file failed to parse (syntax level). Carries the offending
    /// location as reported by the parser.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    /// A semantic invariant of a config or input was violated.
    #[error("validation error: {0}")]
    Validation(String),

    /// A numerical routine could not produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A pipeline stage requires output from an earlier stage.
    #[error("missing upstream stage: {0}")]
    MissingStage(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
