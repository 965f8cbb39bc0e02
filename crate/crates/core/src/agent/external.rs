use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use super::protocol::{decode, DecodeError, Message, PROTOCOL_VERSION};
use super::{Agent, HypothesisRequest};
use crate::corpus::Token;
use crate::error::AgentError;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Client for an agent speaking the line protocol over a child process's
/// stdio or a TCP connection. Requests are strictly one-at-a-time.
pub struct ExternalAgent {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    timeout: Duration,
    description: String,
}

impl fmt::Debug for ExternalAgent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalAgent")
            .field("endpoint", &self.description)
            .field("timeout", &self.timeout)
            .finish()
    }
}

fn spawn_reader<R: Read + Send + 'static>(source: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for line in BufReader::new(source).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    rx
}

impl ExternalAgent {
    /// Spawns `program` and performs the INIT/READY handshake on its stdio.
    pub fn spawn(
        program: &str,
        args: &[String],
        tags: BTreeMap<String, Vec<Token>>,
        timeout: Duration,
    ) -> Result<Self, AgentError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().ok_or(AgentError::Closed)?;
        let stdout = child.stdout.take().ok_or(AgentError::Closed)?;
        let mut agent = Self {
            writer: Box::new(stdin),
            lines: spawn_reader(stdout),
            child: Some(child),
            timeout,
            description: format!("process `{program}`"),
        };
        agent.handshake(tags)?;
        Ok(agent)
    }

    /// Connects to a listening agent and performs the handshake.
    pub fn connect(
        addr: impl ToSocketAddrs + fmt::Display,
        tags: BTreeMap<String, Vec<Token>>,
        timeout: Duration,
    ) -> Result<Self, AgentError> {
        let description = format!("socket {addr}");
        let stream = TcpStream::connect(addr)?;
        let reader = stream.try_clone()?;
        let mut agent = Self {
            writer: Box::new(stream),
            lines: spawn_reader(reader),
            child: None,
            timeout,
            description,
        };
        agent.handshake(tags)?;
        Ok(agent)
    }

    /// Wraps an already-connected transport. Used by tests and in-process
    /// bridges.
    pub fn from_transport<R, W>(
        reader: R,
        writer: W,
        tags: BTreeMap<String, Vec<Token>>,
        timeout: Duration,
    ) -> Result<Self, AgentError>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let mut agent = Self {
            writer: Box::new(writer),
            lines: spawn_reader(reader),
            child: None,
            timeout,
            description: "in-process transport".into(),
        };
        agent.handshake(tags)?;
        Ok(agent)
    }

    fn handshake(&mut self, tags: BTreeMap<String, Vec<Token>>) -> Result<(), AgentError> {
        match self.request(&Message::Init {
            version: PROTOCOL_VERSION,
            tags,
        })? {
            Message::Ready { version } if version == PROTOCOL_VERSION => Ok(()),
            Message::Ready { version } => Err(AgentError::VersionMismatch {
                expected: PROTOCOL_VERSION,
                actual: version,
            }),
            other => Err(unexpected("READY", other)),
        }
    }

    fn send(&mut self, message: &Message) -> Result<(), AgentError> {
        writeln!(self.writer, "{}", message.encode())?;
        self.writer.flush()?;
        Ok(())
    }

    fn receive(&mut self) -> Result<Message, AgentError> {
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match self.lines.recv_timeout(left) {
                Ok(line) => line?,
                Err(RecvTimeoutError::Timeout) => return Err(AgentError::Timeout(self.timeout)),
                Err(RecvTimeoutError::Disconnected) => return Err(AgentError::Closed),
            };
            if line.trim().is_empty() {
                continue;
            }
            return decode(&line).map_err(|e| match e {
                DecodeError::Malformed(m) | DecodeError::Unsupported(m) => {
                    AgentError::Malformed(m)
                }
            });
        }
    }

    /// Sends one request and waits for its response. `ERROR` responses
    /// become [`AgentError::Remote`].
    pub fn request(&mut self, message: &Message) -> Result<Message, AgentError> {
        self.send(message)?;
        match self.receive()? {
            Message::Error { code, message } => Err(AgentError::Remote { code, message }),
            reply => Ok(reply),
        }
    }
}

fn unexpected(expected: &'static str, got: Message) -> AgentError {
    AgentError::Unexpected {
        expected,
        got: got.name().to_string(),
    }
}

impl Agent for ExternalAgent {
    fn hypothesize(&mut self, request: &HypothesisRequest) -> Result<Vec<Token>, AgentError> {
        match self.request(&Message::Hypothesize {
            source_prefix: request.source_prefix.clone(),
            forced_prefix: request.forced_prefix.clone(),
            committed: request.committed.clone(),
        })? {
            Message::Hypothesis { tokens } => Ok(tokens),
            other => Err(unexpected("HYPOTHESIS", other)),
        }
    }

    fn reset(&mut self) -> Result<(), AgentError> {
        match self.request(&Message::Reset {})? {
            Message::Ready { .. } => Ok(()),
            other => Err(unexpected("READY", other)),
        }
    }
}

impl Drop for ExternalAgent {
    fn drop(&mut self) {
        let _ = self.send(&Message::Bye {});
        if let Some(mut child) = self.child.take() {
            let deadline = Instant::now() + Duration::from_millis(500);
            while Instant::now() < deadline {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
