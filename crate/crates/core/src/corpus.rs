//! Timed source utterances and the newline-delimited corpus file format.
//!
//! Each line of a corpus file is one JSON record:
//!
//! ```text
//! {"id":"ted_0001","segments":[{"duration_ms":320,"tokens":["I"]},...],"ref_si":[...],"ref_off":[...]}
//! ```
//!
//! `ref_si` and `ref_off` are optional target token sequences.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Token = String;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedSegment {
    pub index: usize,
    pub duration_ms: u64,
    pub tokens: Vec<Token>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedUtterance {
    pub id: String,
    segments: Vec<TimedSegment>,
    pub ref_si: Option<Vec<Token>>,
    pub ref_off: Option<Vec<Token>>,
}

/// Which reference translation a run is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceStyle {
    Si,
    Off,
}

impl TimedUtterance {
    /// Builds an utterance from `(duration_ms, tokens)` pairs, assigning
    /// contiguous indices.
    pub fn new(
        id: impl Into<String>,
        segments: impl IntoIterator<Item = (u64, Vec<Token>)>,
    ) -> Result<Self> {
        let id = id.into();
        let segments: Vec<TimedSegment> = segments
            .into_iter()
            .enumerate()
            .map(|(index, (duration_ms, tokens))| TimedSegment {
                index,
                duration_ms,
                tokens,
            })
            .collect();
        if segments.is_empty() {
            return Err(Error::Data(format!("utterance {id} has no segments")));
        }
        if let Some(seg) = segments.iter().find(|s| s.duration_ms == 0) {
            return Err(Error::Data(format!(
                "utterance {id}: segment {} has zero duration",
                seg.index
            )));
        }
        Ok(Self {
            id,
            segments,
            ref_si: None,
            ref_off: None,
        })
    }

    pub fn with_refs(mut self, ref_si: Option<Vec<Token>>, ref_off: Option<Vec<Token>>) -> Self {
        self.ref_si = ref_si;
        self.ref_off = ref_off;
        self
    }

    pub fn segments(&self) -> &[TimedSegment] {
        &self.segments
    }

    pub fn total_duration_ms(&self) -> u64 {
        self.segments.iter().map(|s| s.duration_ms).sum()
    }

    pub fn source_tokens(&self) -> Vec<Token> {
        self.segments
            .iter()
            .flat_map(|s| s.tokens.iter().cloned())
            .collect()
    }

    /// Source tokens of the first `n` segments.
    pub fn prefix_tokens(&self, n: usize) -> Vec<Token> {
        self.segments[..n]
            .iter()
            .flat_map(|s| s.tokens.iter().cloned())
            .collect()
    }

    pub fn reference(&self, style: ReferenceStyle) -> Option<&[Token]> {
        match style {
            ReferenceStyle::Si => self.ref_si.as_deref(),
            ReferenceStyle::Off => self.ref_off.as_deref(),
        }
    }

    /// End time of every source token, each segment's span split evenly
    /// across the tokens it carries.
    pub fn token_end_times_ms(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut start = 0u64;
        for seg in &self.segments {
            let n = seg.tokens.len() as f64;
            for k in 1..=seg.tokens.len() {
                out.push(start as f64 + k as f64 * seg.duration_ms as f64 / n);
            }
            start += seg.duration_ms;
        }
        out
    }

    /// Regroups the source into fixed-size chunks of `unit_ms`.
    ///
    /// A token lands in the chunk `(c*unit, (c+1)*unit]` that contains its end
    /// time. The final chunk is shortened to the remaining duration, and chunks
    /// may carry no tokens.
    pub fn resegment(&self, unit_ms: u64) -> Result<TimedUtterance> {
        if unit_ms == 0 {
            return Err(Error::Config("segment size must be positive".into()));
        }
        let total = self.total_duration_ms();
        let n_chunks = total.div_ceil(unit_ms) as usize;
        let mut chunks: Vec<Vec<Token>> = vec![Vec::new(); n_chunks];
        let mut start = 0u64;
        for seg in &self.segments {
            let n = seg.tokens.len() as u128;
            for (k, tok) in seg.tokens.iter().enumerate() {
                // end = start + (k+1)*d/n, kept as an exact fraction over n
                let num = start as u128 * n + (k as u128 + 1) * seg.duration_ms as u128;
                let den = n * unit_ms as u128;
                let chunk = (num.div_ceil(den) - 1) as usize;
                chunks[chunk].push(tok.clone());
            }
            start += seg.duration_ms;
        }
        let segments = chunks.into_iter().enumerate().map(|(c, tokens)| {
            let begin = c as u64 * unit_ms;
            (unit_ms.min(total - begin), tokens)
        });
        Ok(TimedUtterance::new(self.id.clone(), segments)?
            .with_refs(self.ref_si.clone(), self.ref_off.clone()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentRecord {
    duration_ms: u64,
    tokens: Vec<Token>,
}

#[derive(Debug, Serialize, Deserialize)]
struct UtteranceRecord {
    id: String,
    segments: Vec<SegmentRecord>,
    #[serde(default)]
    ref_si: Option<Vec<Token>>,
    #[serde(default)]
    ref_off: Option<Vec<Token>>,
}

impl TimedUtterance {
    pub fn to_json_line(&self) -> String {
        let record = UtteranceRecord {
            id: self.id.clone(),
            segments: self
                .segments
                .iter()
                .map(|s| SegmentRecord {
                    duration_ms: s.duration_ms,
                    tokens: s.tokens.clone(),
                })
                .collect(),
            ref_si: self.ref_si.clone(),
            ref_off: self.ref_off.clone(),
        };
        serde_json::to_string(&record).expect("utterance record serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let record: UtteranceRecord =
            serde_json::from_str(line).map_err(|e| Error::Data(e.to_string()))?;
        Ok(TimedUtterance::new(
            record.id,
            record
                .segments
                .into_iter()
                .map(|s| (s.duration_ms, s.tokens)),
        )?
        .with_refs(record.ref_si, record.ref_off))
    }
}

pub fn read_corpus(path: &Path) -> Result<Vec<TimedUtterance>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let utt = TimedUtterance::from_json_line(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(utt);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, utterances: &[TimedUtterance]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for utt in utterances {
        writeln!(w, "{}", utt.to_json_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
