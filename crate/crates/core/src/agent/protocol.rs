//! Wire messages exchanged with external agents.
//!
//! One JSON object per line, UTF-8, discriminated by its `type` field. See
//! `protocol.md` at the crate root for the full description.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::Token;

pub const PROTOCOL_VERSION: u32 = 1;

pub const TYPES: [&str; 7] = [
    "INIT",
    "READY",
    "HYPOTHESIZE",
    "HYPOTHESIS",
    "RESET",
    "ERROR",
    "BYE",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum Message {
    Init {
        version: u32,
        /// Style tag vocabulary: tag surface → token forms.
        #[serde(default)]
        tags: BTreeMap<String, Vec<Token>>,
    },
    Ready {
        version: u32,
    },
    Hypothesize {
        source_prefix: Vec<Token>,
        forced_prefix: Vec<Token>,
        committed: Vec<Token>,
    },
    Hypothesis {
        tokens: Vec<Token>,
    },
    Reset {},
    Error {
        code: String,
        #[serde(default)]
        message: String,
    },
    Bye {},
}

impl Message {
    pub fn name(&self) -> &'static str {
        match self {
            Message::Init { .. } => "INIT",
            Message::Ready { .. } => "READY",
            Message::Hypothesize { .. } => "HYPOTHESIZE",
            Message::Hypothesis { .. } => "HYPOTHESIS",
            Message::Reset {} => "RESET",
            Message::Error { .. } => "ERROR",
            Message::Bye {} => "BYE",
        }
    }

    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Message::Error {
            code: code.to_string(),
            message: message.into(),
        }
    }

    /// Encodes as a single line without the trailing newline.
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("protocol message serializes")
    }
}

/// Why a line could not be decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeError {
    /// Not JSON, not an object, missing `type`, or bad fields.
    Malformed(String),
    /// Well-formed record with a `type` this version does not know.
    Unsupported(String),
}

impl DecodeError {
    pub fn code(&self) -> &'static str {
        match self {
            DecodeError::Malformed(_) => "malformed",
            DecodeError::Unsupported(_) => "unsupported",
        }
    }

    pub fn detail(&self) -> &str {
        match self {
            DecodeError::Malformed(s) | DecodeError::Unsupported(s) => s,
        }
    }
}

pub fn decode(line: &str) -> Result<Message, DecodeError> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| DecodeError::Malformed(e.to_string()))?;
    let ty = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| DecodeError::Malformed("missing string field `type`".into()))?;
    if !TYPES.contains(&ty) {
        return Err(DecodeError::Unsupported(format!("unknown message type `{ty}`")));
    }
    serde_json::from_value(value).map_err(|e| DecodeError::Malformed(e.to_string()))
}
