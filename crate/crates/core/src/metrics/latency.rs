//! Average Lagging and Average Token Delay over session logs.

use serde::{Deserialize, Serialize};

use crate::session::{Event, SessionLog};

/// Which length sets the ideal emission rate in AL.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlLengthBasis {
    #[default]
    Hypothesis,
    Reference,
}

/// For every write, the time and the number of source tokens read so far.
fn write_positions(log: &SessionLog) -> Vec<(f64, usize)> {
    let mut read_tokens = 0usize;
    let mut out = Vec::new();
    for e in &log.events {
        match e {
            Event::Read { tokens, .. } => read_tokens += tokens,
            Event::Write { emit_ms, .. } => out.push((*emit_ms as f64, read_tokens)),
        }
    }
    out
}

fn lagging(delays: &[f64], total: f64, target_len: usize) -> Option<f64> {
    if delays.is_empty() || target_len == 0 {
        return None;
    }
    let tau = delays
        .iter()
        .position(|&d| d >= total)
        .map_or(delays.len(), |i| i + 1);
    let rate = total / target_len as f64;
    let sum: f64 = delays[..tau]
        .iter()
        .enumerate()
        .map(|(i, d)| d - i as f64 * rate)
        .sum();
    Some(sum / tau as f64)
}

/// AL in milliseconds.
///
/// `target_len` sets the ideal rate `source_total_ms / target_len`; pass the
/// hypothesis or the reference length. Returns `None` for empty output.
/// Negative values are returned as-is.
pub fn average_lagging(log: &SessionLog, target_len: usize) -> Option<f64> {
    let delays: Vec<f64> = log.writes().map(|(_, t)| t as f64).collect();
    lagging(&delays, log.source_total_ms as f64, target_len)
}

/// AL on a token clock: delays are counted in source tokens read.
pub fn average_lagging_tokens(log: &SessionLog, target_len: usize) -> Option<f64> {
    let delays: Vec<f64> = write_positions(log)
        .into_iter()
        .map(|(_, r)| r as f64)
        .collect();
    lagging(&delays, log.source_token_count() as f64, target_len)
}

/// End time of each source token, each read's span split evenly over its
/// tokens.
pub fn source_token_end_times(log: &SessionLog) -> Vec<f64> {
    let mut start = 0u64;
    let mut out = Vec::new();
    for e in &log.events {
        if let Event::Read { end_ms, tokens, .. } = e {
            let span = (end_ms - start) as f64;
            for k in 1..=*tokens {
                out.push(start as f64 + k as f64 * span / *tokens as f64);
            }
            start = *end_ms;
        }
    }
    out
}

/// ATD in milliseconds: mean gap between each output token's emission and
/// the end of its corresponding input token.
///
/// Output token `j` corresponds to input token `min(j, r(j))`, where `r(j)`
/// counts input tokens fully read at emission. When nothing has been read
/// yet the input time is taken as 0.
pub fn average_token_delay(log: &SessionLog) -> Option<f64> {
    let ends = source_token_end_times(log);
    let writes = write_positions(log);
    if writes.is_empty() {
        return None;
    }
    let sum: f64 = writes
        .iter()
        .enumerate()
        .map(|(j, &(t_out, read))| {
            let a = (j + 1).min(read);
            let t_in = if a == 0 { 0.0 } else { ends[a - 1] };
            t_out - t_in
        })
        .sum();
    Some(sum / writes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceLatency {
    pub id: String,
    pub al_ms: Option<f64>,
    pub al_tokens: Option<f64>,
    pub atd_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub al_ms: Option<f64>,
    pub al_tokens: Option<f64>,
    pub atd_ms: Option<f64>,
    pub per_sentence: Vec<SentenceLatency>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl LatencyReport {
    /// Per-sentence metrics and their corpus means; missing values are
    /// skipped in the means. `reference_lens` is consulted only with
    /// [`AlLengthBasis::Reference`].
    pub fn compute(logs: &[SessionLog], reference_lens: &[usize], basis: AlLengthBasis) -> Self {
        let per_sentence: Vec<SentenceLatency> = logs
            .iter()
            .enumerate()
            .map(|(i, log)| {
                let len = match basis {
                    AlLengthBasis::Hypothesis => log.writes().count(),
                    AlLengthBasis::Reference => reference_lens.get(i).copied().unwrap_or(0),
                };
                SentenceLatency {
                    id: log.utterance_id.clone(),
                    al_ms: average_lagging(log, len),
                    al_tokens: average_lagging_tokens(log, len),
                    atd_ms: average_token_delay(log),
                }
            })
            .collect();
        Self {
            al_ms: mean(per_sentence.iter().map(|s| s.al_ms)),
            al_tokens: mean(per_sentence.iter().map(|s| s.al_tokens)),
            atd_ms: mean(per_sentence.iter().map(|s| s.atd_ms)),
            per_sentence,
        }
    }
}
