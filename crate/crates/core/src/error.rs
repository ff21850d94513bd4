//! Shared error type for the library.

use crate::codec::CodecError;

/// Errors surfaced by library operations.
///
/// Programmer errors on hot paths (mismatched scratch buffer sizes and the
/// like) panic via `debug_assert!`; everything a caller can plausibly feed
/// in wrong comes back as one of these variants.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two vectors or shapes that must agree did not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A scalar or structural argument was out of its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Both contribution vectors were numerically zero, so no ranking of
    /// weights is defensible. Surfaced rather than silently picking one.
    #[error("degenerate contributions: global and local signals are both zero")]
    DegenerateContributions,

    /// A non-finite value appeared where the invariants require finiteness.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Wire-format encode/decode failure.
    #[error("codec: {0}")]
    Codec(#[from] CodecError),

    /// Output files already exist and overwriting was not forced.
    #[error("output already exists: {0} (pass force to overwrite)")]
    OutputExists(String),

    /// Filesystem failure while reading data or writing artifacts.
    #[error("io on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A data file had a malformed or unexpected layout.
    #[error("malformed data file {path}: {reason}")]
    MalformedData { path: String, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }
}

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
