use thiserror::Error;

pub type Result<T> = std::result::Result<T, ZkError>;

#[derive(Debug, Error)]
pub enum ZkError {
    /// A MAC, range or consistency check failed: the prover deviated.
    #[error("ABORT: {0}")]
    Abort(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("session error: {0}")]
    Session(String),

    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("rejected config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Core(#[from] abstain_core::Error),
}

impl ZkError {
    pub fn is_abort(&self) -> bool {
        matches!(self, ZkError::Abort(_))
    }

    pub(crate) fn abort(msg: impl Into<String>) -> Self {
        ZkError::Abort(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        ZkError::InvalidInput(msg.into())
    }
}

impl From<std::io::Error> for ZkError {
    fn from(e: std::io::Error) -> Self {
        ZkError::Transport(e.to_string())
    }
}
