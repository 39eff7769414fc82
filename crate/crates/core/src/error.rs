use std::path::PathBuf;

/// Errors produced by every stage of the inpainting engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("cannot encode image {path}: {reason}")]
    Encode { path: PathBuf, reason: String },

    #[error("no frames found in {0}")]
    NoFrames(PathBuf),

    #[error("frame/mask count mismatch: {frames} frames, {masks} masks")]
    CountMismatch { frames: usize, masks: usize },

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate affine transform (|det| = {0:e})")]
    DegenerateTransform(f64),

    #[error("insufficient joint visibility: {visible} of {total} pixels")]
    InsufficientVisibility { visible: usize, total: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("constraint unsatisfiable: {0}")]
    Unsatisfiable(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate in numerical routines rather than
    /// in I/O or argument validation.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateTransform(_)
                | Error::InsufficientVisibility { .. }
                | Error::NonFinite(_)
                | Error::Unsatisfiable(_)
        )
    }

    /// Process exit code: 1 for invalid requests, 2 for unreadable or
    /// inconsistent input files, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            _ if self.is_numeric() => 3,
            Error::Config(_) | Error::InvalidInput(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_dims(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
