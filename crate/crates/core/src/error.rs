use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Agent,
    Data,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("agent failure at segment {segment}: {source}")]
    AgentAtSegment {
        segment: usize,
        #[source]
        source: AgentError,
    },

    #[error(transparent)]
    Agent(#[from] AgentError),

    #[error("policy diverged: more than {limit} output tokens written")]
    Divergence { limit: usize },

    #[error("utterance {id}: {source}")]
    Utterance {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::AgentAtSegment { .. } | Error::Agent(_) | Error::Divergence { .. } => {
                ErrorKind::Agent
            }
            Error::Utterance { source, .. } => source.kind(),
            Error::Data(_) | Error::Parse { .. } | Error::Io { .. } => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_utterance(self, id: &str) -> Self {
        Error::Utterance {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}

/// Failures talking to a translation agent.
#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent did not respond within {0:?}")]
    Timeout(std::time::Duration),

    #[error("malformed message from agent: {0}")]
    Malformed(String),

    #[error("protocol version mismatch: harness speaks {expected}, agent answered {actual}")]
    VersionMismatch { expected: u32, actual: u32 },

    #[error("agent returned error `{code}`: {message}")]
    Remote { code: String, message: String },

    #[error("unexpected `{got}` message, expected `{expected}`")]
    Unexpected { expected: &'static str, got: String },

    #[error("hypothesis does not begin with the forced prefix {forced:?}")]
    ForcedPrefixRejected { forced: Vec<String> },

    #[error("agent transport closed")]
    Closed,

    #[error("agent i/o: {0}")]
    Io(#[from] std::io::Error),
}
