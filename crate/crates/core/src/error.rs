use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the tracking and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mask has no set pixels")]
    EmptyMask,

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("instance ids of the two correlation matrices are not aligned")]
    IdMisalignment,

    #[error("matching supervision has no pairs")]
    EmptySupervision,

    #[error("invalid supervision: {0}")]
    InvalidSupervision(String),

    #[error("bad magic bytes")]
    BadMagic,

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("file is truncated")]
    TruncatedFile,

    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),

    #[error("unknown class id {0}")]
    UnknownClassId(u16),

    #[error("flow dimensions out of range: {width}x{height}")]
    DimensionOverflow { width: i64, height: i64 },

    #[error("invalid segmentation map: {0}")]
    InvalidMap(String),

    #[error("invalid flow field: {0}")]
    InvalidFlow(String),

    #[error("expected {expected} items, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("scene spec out of bounds: {0}")]
    SpecOutOfBounds(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attaches a path to an error raised while handling that file.
    pub fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// The error with any file context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::File { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by malformed input files.
    pub fn is_malformed_input(&self) -> bool {
        matches!(
            self.root(),
            Error::BadMagic
                | Error::UnsupportedVersion(_)
                | Error::TruncatedFile
                | Error::TrailingBytes(_)
                | Error::UnknownClassId(_)
                | Error::DimensionOverflow { .. }
                | Error::InvalidMap(_)
                | Error::InvalidFlow(_)
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
