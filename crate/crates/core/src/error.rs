//! Crate-wide error type.
//!
//! Variants are grouped by who is at fault, so callers (notably the CLI)
//! can map them onto exit classes: `Usage`/`Validation` for bad arguments
//! or spec files, `Parse`/`Contract`/`Version`/`Checksum` for violated data
//! contracts, `Io`/`Internal` for everything else.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid flag combination or argument value.
    #[error("usage: {0}")]
    Usage(String),

    /// A spec value violates its documented range or an invariant.
    #[error("validation: {0}")]
    Validation(String),

    /// Two adjacent layers have incompatible shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A document could not be parsed at all.
    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    /// A data file violates its format contract (headers, columns, cells).
    #[error("data contract: {0}")]
    Contract(String),

    /// A numeric argument is outside a function's domain.
    #[error("domain: {0}")]
    Domain(String),

    /// A bundle or archive was written by an incompatible format version.
    #[error("format version mismatch: found {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    /// A bundle or archive failed its integrity check.
    #[error("checksum mismatch: {0}")]
    Checksum(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
