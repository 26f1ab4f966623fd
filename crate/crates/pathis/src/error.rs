//! Error type shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter value outside its documented domain.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Geometry that cannot be realized, e.g. a sensor outside the simulated
    /// domain or operands built on mismatched grids.
    #[error("geometry: {0}")]
    Geometry(String),

    /// The time axis is too short to cover the farthest pixel.
    #[error("coverage: {0}")]
    Coverage(String),

    /// A file did not start with the expected magic string.
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    /// A file ended before its header-declared payload.
    #[error("truncated file: {0}")]
    Truncated(String),

    /// A header field that could not be parsed.
    #[error("malformed header: {0}")]
    Parse(String),

    /// Payload or operand dimensions disagree with what a header or a
    /// counterpart declares.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A numeric procedure produced a non-finite intermediate.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The training loss became non-finite.
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
}

impl Error {
    /// Process exit code for the command-line front end: 1 for usage and
    /// configuration problems, 2 for I/O and file-format problems, 3 for
    /// numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Geometry(_) | Error::Coverage(_) => 1,
            Error::BadMagic { .. }
            | Error::Truncated(_)
            | Error::Parse(_)
            | Error::DimensionMismatch(_)
            | Error::Io(_) => 2,
            Error::Numeric(_) | Error::Divergence { .. } => 3,
        }
    }
}
