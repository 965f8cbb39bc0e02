use std::io::{BufRead, Write};

use super::protocol::{decode, Message, PROTOCOL_VERSION};
use super::{Agent, HypothesisRequest};

/// Serves `agent` over a line-delimited transport until `BYE` or EOF.
///
/// Every request line gets exactly one response line. Bad input is answered
/// with `ERROR` and the session continues.
pub fn serve<A, R, W>(agent: &mut A, input: R, mut output: W) -> std::io::Result<()>
where
    A: Agent + ?Sized,
    R: BufRead,
    W: Write,
{
    let mut ready = false;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (reply, done) = match decode(&line) {
            Err(e) => (Message::error(e.code(), e.detail()), false),
            Ok(Message::Init { version, .. }) if version != PROTOCOL_VERSION => (
                Message::error(
                    "version",
                    format!("agent speaks version {PROTOCOL_VERSION}, got {version}"),
                ),
                false,
            ),
            Ok(Message::Init { .. }) => {
                ready = true;
                (
                    Message::Ready {
                        version: PROTOCOL_VERSION,
                    },
                    false,
                )
            }
            Ok(Message::Reset {}) => match agent.reset() {
                Ok(()) => (
                    Message::Ready {
                        version: PROTOCOL_VERSION,
                    },
                    false,
                ),
                Err(e) => (Message::error("agent", e.to_string()), false),
            },
            Ok(Message::Hypothesize { .. }) if !ready => {
                (Message::error("not_initialized", "send INIT first"), false)
            }
            Ok(Message::Hypothesize {
                source_prefix,
                forced_prefix,
                committed,
            }) => {
                let request = HypothesisRequest {
                    source_prefix,
                    forced_prefix,
                    committed,
                };
                match agent.hypothesize(&request) {
                    Ok(tokens) => (Message::Hypothesis { tokens }, false),
                    Err(e) => (Message::error("agent", e.to_string()), false),
                }
            }
            Ok(Message::Bye {}) => (Message::Bye {}, true),
            Ok(other) => (
                Message::error(
                    "unsupported",
                    format!("`{}` is a response type", other.name()),
                ),
                false,
            ),
        };
        writeln!(output, "{}", reply.encode())?;
        output.flush()?;
        if done {
            break;
        }
    }
    Ok(())
}
