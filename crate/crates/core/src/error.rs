use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor or layer dimensions; names both shapes.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    /// A precondition on an argument failed.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A layer name did not resolve against the network.
    #[error("unknown layer: {0}")]
    UnknownLayer(String),

    /// A trainability pattern matched no parameterized layer.
    #[error("pattern {0:?} matches no parameterized layer")]
    PatternUnmatched(String),

    /// Checkpoint file does not start with the expected magic bytes.
    #[error("bad magic in checkpoint {path}: not a SMNN file")]
    BadMagic { path: PathBuf },

    /// Checkpoint format version is not supported.
    #[error("unsupported checkpoint version {found} in {path} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    /// Checkpoint file ended before all declared records were read.
    #[error("truncated checkpoint {path}: {detail}")]
    TruncatedCheckpoint { path: PathBuf, detail: String },

    /// Checkpoint contents do not fit the expected topology.
    #[error("checkpoint mismatch at layer {layer:?}: {detail}")]
    CheckpointMismatch { layer: String, detail: String },

    /// A manifest row failed validation; line numbers are 1-based.
    #[error("manifest {path}, line {line}: {detail}")]
    Manifest {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    /// Training produced a non-finite loss.
    #[error("non-finite loss at iteration {iteration}{}", fold.map(|f| format!(" (fold {f})")).unwrap_or_default())]
    NonFiniteLoss {
        iteration: usize,
        fold: Option<usize>,
    },

    /// Image decoding failed.
    #[error("cannot decode image {path}: {detail}")]
    ImageDecode { path: PathBuf, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl Into<String>,
        actual: impl Into<String>,
    ) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    /// True for errors caused by the filesystem rather than the data or math.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
