use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced anywhere in the compression, streaming and rendering
/// pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rank {k}: must be between 1 and {max}")]
    InvalidRank { k: usize, max: usize },
    #[error("invalid component count {0}: must be a positive multiple of 4")]
    InvalidComponentCount(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },
    #[error("position outside the unit cube: {0:?}")]
    Domain([f64; 3]),
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
    #[error("ordering error: {0}")]
    Ordering(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("unexpected end of data: needed {needed} bytes at offset {offset}")]
    Bounds { offset: u64, needed: u64 },
    #[error("corrupt data: {0}")]
    Corruption(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("server rejected request (code {code}): {message}")]
    Rejected { code: u16, message: String },
    #[error("session closed")]
    SessionClosed,
    #[error("annotation delivery unknown: connection lost before the echo arrived")]
    DeliveryUnknown,
    #[error("nothing to render yet: no evaluable octree level")]
    NotReady,
    #[error("connect error: {0}")]
    Connect(String),
    #[error("timed out waiting for {0}")]
    Timeout(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by bad arguments or data rather than by the
    /// environment (I/O, network).
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::Connect(_) | Error::Timeout(_) | Error::SessionClosed | Error::DeliveryUnknown
        )
    }
}
