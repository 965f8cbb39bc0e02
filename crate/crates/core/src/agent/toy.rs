//! Deterministic lexical translator with two output styles.
//!
//! SI style maps the source monotonically and drops the lexicon's function
//! words. Offline style keeps every content word but moves each verb right,
//! past up to `reorder_window` following words of its clause, giving the
//! verb-final order of the target language. Offline output is recomputed
//! from scratch for every prefix, so early hypotheses are unstable.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Agent, HypothesisRequest};
use crate::corpus::Token;
use crate::error::{AgentError, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyStyle {
    Si,
    #[serde(alias = "off")]
    Offline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyLexicon {
    /// Source → target. An empty target means the word has no surface form
    /// (articles, for instance).
    pub entries: BTreeMap<String, String>,
    #[serde(default)]
    pub function_words: BTreeSet<String>,
    #[serde(default)]
    pub verbs: BTreeSet<String>,
    /// Source tokens that close a clause; verbs never move past them.
    #[serde(default)]
    pub clause_breaks: BTreeSet<String>,
    pub reorder_window: usize,
}

impl ToyLexicon {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Unknown words map to a visible `UNK_<word>` form.
    pub fn lookup(&self, source: &str) -> Option<String> {
        match self.entries.get(source) {
            Some(t) if t.is_empty() => None,
            Some(t) => Some(t.clone()),
            None => Some(format!("UNK_{source}")),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Plain,
    Verb,
    Break,
}

pub fn toy_translate(lexicon: &ToyLexicon, prefix: &[Token], style: ToyStyle) -> Vec<Token> {
    let mapped: Vec<(Token, Role)> = prefix
        .iter()
        .filter(|w| !(style == ToyStyle::Si && lexicon.function_words.contains(*w)))
        .filter_map(|w| {
            let role = if lexicon.verbs.contains(w) {
                Role::Verb
            } else if lexicon.clause_breaks.contains(w) {
                Role::Break
            } else {
                Role::Plain
            };
            lexicon.lookup(w).map(|t| (t, role))
        })
        .collect();

    if style == ToyStyle::Si {
        return mapped.into_iter().map(|(t, _)| t).collect();
    }

    let mut out = Vec::with_capacity(mapped.len());
    let mut pending: Option<(Token, usize)> = None;
    for (tok, role) in mapped {
        match role {
            Role::Verb | Role::Break => {
                out.extend(pending.take().map(|(v, _)| v));
                if role == Role::Verb && lexicon.reorder_window > 0 {
                    pending = Some((tok, lexicon.reorder_window));
                } else {
                    out.push(tok);
                }
            }
            Role::Plain => {
                out.push(tok);
                if let Some((_, left)) = pending.as_mut() {
                    *left -= 1;
                    if *left == 0 {
                        out.extend(pending.take().map(|(v, _)| v));
                    }
                }
            }
        }
    }
    out.extend(pending.map(|(v, _)| v));
    out
}

/// Reads the style from a forced tag prefix such as `<si>` or `_< si >`.
fn style_from_forced(forced: &[Token]) -> Option<Option<ToyStyle>> {
    if forced.is_empty() {
        return Some(None);
    }
    let joined: String = forced.concat();
    match joined.trim_start_matches(['_', '\u{2581}']) {
        "<si>" => Some(Some(ToyStyle::Si)),
        "<off>" => Some(Some(ToyStyle::Offline)),
        _ => None,
    }
}

/// The toy translator behind the [`Agent`] interface.
///
/// The forced style tag selects the output style; untagged requests use
/// `default_style`. Hypotheses always start with the committed output: when
/// the free translation disagrees with it, the committed tokens are kept and
/// the remaining translated words follow in their free order.
#[derive(Debug, Clone)]
pub struct ToyAgent {
    lexicon: Arc<ToyLexicon>,
    default_style: ToyStyle,
}

impl ToyAgent {
    pub fn new(lexicon: Arc<ToyLexicon>, default_style: ToyStyle) -> Self {
        Self {
            lexicon,
            default_style,
        }
    }

    pub fn lexicon(&self) -> &ToyLexicon {
        &self.lexicon
    }

    pub fn continue_from(&self, free: Vec<Token>, committed: &[Token]) -> Vec<Token> {
        if free.starts_with(committed) {
            return free;
        }
        let mut rest = free;
        for c in committed {
            if let Some(pos) = rest.iter().position(|t| t == c) {
                rest.remove(pos);
            }
        }
        committed.iter().cloned().chain(rest).collect()
    }
}

impl Agent for ToyAgent {
    fn hypothesize(&mut self, request: &HypothesisRequest) -> Result<Vec<Token>, AgentError> {
        let style = style_from_forced(&request.forced_prefix)
            .ok_or_else(|| AgentError::Remote {
                code: "unsupported_tag".into(),
                message: format!("unknown forced prefix {:?}", request.forced_prefix),
            })?
            .unwrap_or(self.default_style);
        let free = toy_translate(&self.lexicon, &request.source_prefix, style);
        let body = self.continue_from(free, &request.committed);
        Ok(request.forced_prefix.iter().cloned().chain(body).collect())
    }
}
