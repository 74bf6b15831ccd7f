use std::io;
use std::path::PathBuf;

/// Errors from file formats, configuration and the batch pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: bad NIfTI magic {found:?}")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("{path}: {what} is not supported (only single-file NIfTI-1 is)")]
    UnsupportedFormat { path: PathBuf, what: &'static str },
    #[error("{path}: unsupported datatype code {code}")]
    UnsupportedDatatype { path: PathBuf, code: i16 },
    #[error("{path}: voxel payload is {actual} bytes, expected {expected}")]
    PayloadSize {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("{path}: malformed header: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("value {value} cannot be stored as {datatype}")]
    Range { datatype: &'static str, value: f64 },
    #[error("{path}: label volume holds value {value}, expected only 0 and 1")]
    NotBinary { path: PathBuf, value: f64 },
    #[error("{path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("{path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("{path}: {reason}")]
    Report { path: PathBuf, reason: String },
    #[error("flag policy: {0}")]
    Policy(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] segunc_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage/config/data error, 2 I/O error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
