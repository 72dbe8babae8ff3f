use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong in the library.
///
/// The variants are grouped by [`ErrorKind`] so the CLI and the C ABI can map
/// them onto stable exit codes without matching on every variant.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("bad magic in {format} at byte 0: expected {expected:#010x}, found {actual:#010x}")]
    BadMagic {
        format: &'static str,
        expected: u32,
        actual: u32,
    },

    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u16 },

    #[error("truncated {format} at byte {offset}: {context}")]
    Truncated {
        format: &'static str,
        offset: u64,
        context: String,
    },

    #[error("malformed {format} at byte {offset}: {reason}")]
    Malformed {
        format: &'static str,
        offset: u64,
        reason: String,
    },

    #[error("helper data targets layer {helper_layer} but {reason}")]
    HelperMismatch { helper_layer: u16, reason: String },

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error category used for exit codes and FFI status values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Dimension,
    InvalidArgument,
    Parse,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Dimension { .. } | Error::HelperMismatch { .. } => ErrorKind::Dimension,
            Error::InvalidArgument(_) => ErrorKind::InvalidArgument,
            Error::BadMagic { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Truncated { .. }
            | Error::Malformed { .. }
            | Error::Json(_) => ErrorKind::Parse,
            Error::Io(_) | Error::File { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn dim(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension { what, expected, actual }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}
