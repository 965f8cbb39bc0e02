//! Translation agents: the built-in toy translator and external agents
//! reached over the line-delimited wire protocol.

mod external;
pub mod protocol;
mod server;
mod toy;

use serde::{Deserialize, Serialize};

pub use external::{ExternalAgent, DEFAULT_TIMEOUT};
pub use server::serve;
pub use toy::{toy_translate, ToyAgent, ToyLexicon, ToyStyle};

use crate::corpus::Token;
use crate::error::AgentError;

/// One request for a full hypothesis over the current source prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisRequest {
    pub source_prefix: Vec<Token>,
    /// Tokens the agent must force-decode first (the style tag).
    pub forced_prefix: Vec<Token>,
    /// Output already committed; the agent should continue from it.
    pub committed: Vec<Token>,
}

impl HypothesisRequest {
    pub fn new(source_prefix: Vec<Token>, committed: Vec<Token>) -> Self {
        Self {
            source_prefix,
            forced_prefix: Vec::new(),
            committed,
        }
    }
}

pub trait Agent {
    /// Returns the full hypothesis, beginning with the forced prefix.
    fn hypothesize(&mut self, request: &HypothesisRequest) -> Result<Vec<Token>, AgentError>;

    /// Clears per-utterance state before a new session.
    fn reset(&mut self) -> Result<(), AgentError> {
        Ok(())
    }
}

impl<A: Agent + ?Sized> Agent for &mut A {
    fn hypothesize(&mut self, request: &HypothesisRequest) -> Result<Vec<Token>, AgentError> {
        (**self).hypothesize(request)
    }

    fn reset(&mut self) -> Result<(), AgentError> {
        (**self).reset()
    }
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn hypothesize(&mut self, request: &HypothesisRequest) -> Result<Vec<Token>, AgentError> {
        (**self).hypothesize(request)
    }

    fn reset(&mut self) -> Result<(), AgentError> {
        (**self).reset()
    }
}

/// An agent with exactly one active transport.
#[derive(Debug)]
pub enum AgentHandle {
    BuiltinToy(ToyAgent),
    External(ExternalAgent),
}

impl Agent for AgentHandle {
    fn hypothesize(&mut self, request: &HypothesisRequest) -> Result<Vec<Token>, AgentError> {
        match self {
            AgentHandle::BuiltinToy(a) => a.hypothesize(request),
            AgentHandle::External(a) => a.hypothesize(request),
        }
    }

    fn reset(&mut self) -> Result<(), AgentError> {
        match self {
            AgentHandle::BuiltinToy(a) => a.reset(),
            AgentHandle::External(a) => a.reset(),
        }
    }
}
