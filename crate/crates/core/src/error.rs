use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A value violates one of its type invariants.
    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    #[error("point height {z} m is not below camera height {h_cam} m")]
    HeightExceedsCamera { z: f64, h_cam: f64 },

    #[error("degenerate camera pose: {0}")]
    DegeneratePose(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("anchor sets do not match: {0}")]
    MismatchedAnchors(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("degenerate point pair {index}: flat distance {distance}")]
    DegeneratePair { index: usize, distance: f64 },

    #[error("no pairing available for lane {0}")]
    NoPairing(String),

    #[error("solver diverged: {0}")]
    Diverged(String),

    #[error("road spec: {0}")]
    Spec(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            reason: reason.into(),
        }
    }
}
