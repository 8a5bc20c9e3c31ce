use std::path::PathBuf;

/// Errors produced by the simulator and analysis routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter violates its documented domain.
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParam { field: String, reason: String },

    /// The scenario file could not be parsed.
    #[error("failed to parse scenario {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed IDX dataset file.
    #[error("IDX format error in {path}: {reason}")]
    Idx { path: PathBuf, reason: String },

    /// Decoding requires a strictly positive power-scaling factor.
    #[error("cannot decode a slot received with power-scaling factor {rho}")]
    UndefinedDecode { rho: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
