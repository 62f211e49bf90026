//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Camera matrix is singular or otherwise unusable.
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    /// A configuration value violates its documented range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Image dimensions of paired inputs do not match.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An action contained NaN or another unusable value.
    #[error("invalid action: {0}")]
    InvalidAction(String),

    /// An operation was called on a state it does not accept.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A wire line failed to parse as a packet.
    #[error("malformed packet: {0}")]
    MalformedPacket(String),

    /// A packet field violates its invariant (non-finite, out of range).
    #[error("invalid packet: {0}")]
    InvalidPacket(String),

    /// A transport receive hit its deadline.
    #[error("transport timeout after {0} ms")]
    Timeout(u64),

    /// The transport is closed or failed to deliver.
    #[error("transport failure: {0}")]
    Transport(String),

    /// No path exists between the requested grid cells.
    #[error("no path: {0}")]
    NoPath(String),

    /// A policy failed to produce an action.
    #[error("policy failure: {0}")]
    PolicyFailure(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error(transparent)]
    Json(#[from] serde_json::Error),

    /// Image decode/encode failure.
    #[error("image error: {0}")]
    Image(String),
}

impl Error {
    /// True when the error stems from bad configuration or inputs rather
    /// than a runtime failure. Drives the CLI's exit-code split.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_) | Error::InvalidIntrinsics(_) | Error::Json(_)
        )
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
