use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("unknown segment {segment} in profile {expert}")]
    UnknownSegment { expert: String, segment: u64 },
    #[error("embedding provider failed: {0}")]
    Provider(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn state(msg: impl Into<String>) -> Self {
        Error::InvalidState(msg.into())
    }

    /// Provider failures may succeed on a later attempt; malformed input never will.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Provider(_))
    }
}
