use abstain_zk::ZkError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUDIT_FAIL: i32 = 2;
pub const EXIT_ABORT: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_BAD_FLAGS: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Flags(String),

    #[error("{0}")]
    Io(String),

    #[error("protocol aborted: {0}")]
    Abort(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Flags(_) => EXIT_BAD_FLAGS,
            CliError::Io(_) => EXIT_IO,
            CliError::Abort(_) => EXIT_ABORT,
        }
    }

    pub fn flags(msg: impl Into<String>) -> Self {
        CliError::Flags(msg.into())
    }
}

impl From<abstain_core::Error> for CliError {
    fn from(e: abstain_core::Error) -> Self {
        use abstain_core::Error as E;
        match e {
            E::InvalidInput(_) | E::InvalidConfig(_) | E::InvalidRegion(_) => CliError::Flags(e.to_string()),
            E::Ingest { .. } | E::UnsupportedVersion(_) | E::Io(_) | E::Json(_) | E::Csv(_) => {
                CliError::Io(e.to_string())
            }
        }
    }
}

impl From<ZkError> for CliError {
    fn from(e: ZkError) -> Self {
        match e {
            ZkError::Abort(_) => CliError::Abort(e.to_string()),
            ZkError::InvalidInput(_) | ZkError::InvalidConfig(_) => CliError::Flags(e.to_string()),
            ZkError::Core(inner) => inner.into(),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
