use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type. Variants map one-to-one onto the failure modes the
/// individual modules can surface.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated file: need {needed} bytes, have {have}")]
    TruncatedFile { needed: usize, have: usize },

    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("unsupported file version {0}")]
    VersionUnsupported(u32),

    #[error("inconsistent header: {0}")]
    HeaderInconsistent(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("forward trace already consumed by a backward pass")]
    TraceReused,

    #[error("checkpoint spec mismatch: {0}")]
    SpecMismatch(String),

    #[error(
        "degenerate difference vector (norm {norm:.3e} < {limit:.3e}) in sequence {sequence} at step {step}"
    )]
    DegenerateDifference {
        sequence: usize,
        step: usize,
        norm: f64,
        limit: f64,
    },

    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("fewer than two classes present in the labels")]
    SingleClass,

    #[error("kernel system ill-conditioned; ridge {ridge:.3e} is too small")]
    IllConditioned { ridge: f64 },

    #[error("attribute `{0}` is not carried by any sequence in this dataset")]
    AttributeMissing(String),

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("degenerate covariance: all responses identical")]
    DegenerateCovariance,

    #[error("file missing: {0}")]
    FileMissing(PathBuf),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for validation failures, 3 for runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BadMagic { .. }
            | Error::TruncatedFile { .. }
            | Error::CountMismatch { .. }
            | Error::InvalidGeometry(_)
            | Error::InvalidRange(_)
            | Error::ChecksumMismatch { .. }
            | Error::VersionUnsupported(_)
            | Error::HeaderInconsistent(_)
            | Error::SpecMismatch(_)
            | Error::ConfigInvalid(_)
            | Error::FileMissing(_) => 2,
            _ => 3,
        }
    }
}
