//! Replays a timed utterance against a policy/agent pair on a simulated
//! clock and records every read and write.
//!
//! Computation time is not modeled: a token committed after reading segment
//! `i` is stamped with that segment's end time.

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, HypothesisRequest};
use crate::corpus::{TimedUtterance, Token};
use crate::error::{AgentError, Error, Result};
use crate::policy::{
    apply_forced_prefix, flush, Hypothesis, PolicyConfig, PolicyKind, PolicyState, StyleTagChoice,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum Event {
    Read {
        segment: usize,
        end_ms: u64,
        /// Source tokens carried by the segment.
        tokens: usize,
    },
    Write {
        token: Token,
        emit_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLog {
    pub utterance_id: String,
    pub events: Vec<Event>,
    pub source_total_ms: u64,
    pub finished: bool,
    pub prefix_conflicts: usize,
}

impl SessionLog {
    pub fn new(utterance_id: impl Into<String>, source_total_ms: u64) -> Self {
        Self {
            utterance_id: utterance_id.into(),
            events: Vec::new(),
            source_total_ms,
            finished: false,
            prefix_conflicts: 0,
        }
    }

    pub fn output(&self) -> Vec<Token> {
        self.writes().map(|(t, _)| t.clone()).collect()
    }

    pub fn writes(&self) -> impl Iterator<Item = (&Token, u64)> {
        self.events.iter().filter_map(|e| match e {
            Event::Write { token, emit_ms } => Some((token, *emit_ms)),
            Event::Read { .. } => None,
        })
    }

    pub fn source_token_count(&self) -> usize {
        self.events
            .iter()
            .map(|e| match e {
                Event::Read { tokens, .. } => *tokens,
                Event::Write { .. } => 0,
            })
            .sum()
    }

    /// Keeps only the writes at the given output positions (ascending),
    /// as when a post-processor removes tokens from the stream.
    pub fn retain_outputs(&self, positions: &[usize]) -> SessionLog {
        let mut keep = positions.iter().peekable();
        let mut j = 0usize;
        let events = self
            .events
            .iter()
            .filter(|e| match e {
                Event::Read { .. } => true,
                Event::Write { .. } => {
                    let kept = keep.peek() == Some(&&j);
                    if kept {
                        keep.next();
                    }
                    j += 1;
                    kept
                }
            })
            .cloned()
            .collect();
        SessionLog {
            events,
            ..self.clone()
        }
    }

    /// Checks ordering and clock invariants, returning the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut clock = 0u64;
        let mut next_segment = 0usize;
        let mut last_read: Option<u64> = None;
        for (i, e) in self.events.iter().enumerate() {
            match e {
                Event::Read { segment, end_ms, .. } => {
                    if *segment != next_segment {
                        return Err(format!("event {i}: read of segment {segment}, expected {next_segment}"));
                    }
                    if *end_ms < clock {
                        return Err(format!("event {i}: time goes backwards"));
                    }
                    next_segment += 1;
                    clock = *end_ms;
                    last_read = Some(*end_ms);
                }
                Event::Write { emit_ms, .. } => {
                    if Some(*emit_ms) != last_read && *emit_ms != self.source_total_ms {
                        return Err(format!(
                            "event {i}: write at {emit_ms} does not match latest read {last_read:?}"
                        ));
                    }
                    if *emit_ms < clock {
                        return Err(format!("event {i}: time goes backwards"));
                    }
                    clock = *emit_ms;
                }
            }
        }
        if clock > self.source_total_ms {
            return Err(format!("clock {clock} exceeds source duration {}", self.source_total_ms));
        }
        Ok(())
    }
}

/// What happened at one policy step; kept for inspection and tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepTrace {
    pub segments_read: usize,
    pub hypothesis: Vec<Token>,
    pub committed: Vec<Token>,
    pub conflict: bool,
    pub is_flush: bool,
}

#[derive(Debug, Clone)]
pub struct SessionRun {
    pub log: SessionLog,
    pub steps: Vec<StepTrace>,
}

pub fn run_session<A: Agent + ?Sized>(
    utterance: &TimedUtterance,
    policy: &PolicyConfig,
    agent: &mut A,
    style: &StyleTagChoice,
) -> Result<SessionLog> {
    run_session_traced(utterance, policy, agent, style).map(|r| r.log)
}

fn request_hypothesis<A: Agent + ?Sized>(
    agent: &mut A,
    utterance: &TimedUtterance,
    segments_read: usize,
    committed: &[Token],
    style: &StyleTagChoice,
) -> Result<Hypothesis> {
    let request = apply_forced_prefix(
        HypothesisRequest::new(utterance.prefix_tokens(segments_read), committed.to_vec()),
        style,
    );
    let at = |source: AgentError| Error::AgentAtSegment {
        segment: segments_read.saturating_sub(1),
        source,
    };
    let raw = agent.hypothesize(&request).map_err(at)?;
    let body = raw
        .strip_prefix(request.forced_prefix.as_slice())
        .ok_or_else(|| {
            at(AgentError::ForcedPrefixRejected {
                forced: request.forced_prefix.clone(),
            })
        })?;
    Ok(Hypothesis::new(body.to_vec(), segments_read))
}

pub fn run_session_traced<A: Agent + ?Sized>(
    utterance: &TimedUtterance,
    policy: &PolicyConfig,
    agent: &mut A,
    style: &StyleTagChoice,
) -> Result<SessionRun> {
    policy.validate()?;
    style.validate()?;
    agent
        .reset()
        .map_err(|source| Error::AgentAtSegment { segment: 0, source })?;

    let mut log = SessionLog::new(&utterance.id, utterance.total_duration_ms());
    let mut state = PolicyState::new();
    let mut steps = Vec::new();
    let mut clock = 0u64;

    let record = |log: &mut SessionLog, tokens: Vec<Token>, clock: u64, committed: usize| {
        if committed > policy.max_output_tokens {
            return Err(Error::Divergence {
                limit: policy.max_output_tokens,
            });
        }
        log.events.extend(
            tokens
                .into_iter()
                .map(|token| Event::Write { token, emit_ms: clock }),
        );
        Ok(())
    };

    for seg in utterance.segments() {
        clock += seg.duration_ms;
        log.events.push(Event::Read {
            segment: seg.index,
            end_ms: clock,
            tokens: seg.tokens.len(),
        });
        let read = seg.index + 1;
        // LA only learns from hypotheses over distinct source prefixes; a
        // chunk that brings no tokens would let a hypothesis agree with itself
        if policy.kind == PolicyKind::LocalAgreement && seg.tokens.is_empty() {
            continue;
        }
        let hyp = request_hypothesis(agent, utterance, read, state.committed(), style)?;
        let out = policy.step(&mut state, read, &hyp);
        record(&mut log, out, clock, state.committed().len())?;
        steps.push(StepTrace {
            segments_read: read,
            hypothesis: hyp.tokens,
            committed: state.committed().to_vec(),
            conflict: state.conflicted(),
            is_flush: false,
        });
    }

    let all = utterance.segments().len();
    let hyp = request_hypothesis(agent, utterance, all, state.committed(), style)?;
    let out = flush(&mut state, &hyp);
    let end = log.source_total_ms;
    record(&mut log, out, end, state.committed().len())?;
    steps.push(StepTrace {
        segments_read: all,
        hypothesis: hyp.tokens,
        committed: state.committed().to_vec(),
        conflict: state.conflicted(),
        is_flush: true,
    });

    log.finished = true;
    log.prefix_conflicts = state.prefix_conflicts();
    Ok(SessionRun { log, steps })
}
