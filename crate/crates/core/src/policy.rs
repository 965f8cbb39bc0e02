//! Incremental decoding policies: Local Agreement (LA-n) and wait-k, plus the
//! forced style-tag prefix.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::agent::HypothesisRequest;
use crate::corpus::Token;
use crate::error::{Error, Result};
use crate::textproc::TagSpec;

pub const DEFAULT_MAX_OUTPUT_TOKENS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    LocalAgreement,
    WaitK,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub la_n: usize,
    pub k: usize,
    pub max_output_tokens: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::LocalAgreement,
            la_n: 2,
            k: 1,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }
}

impl PolicyConfig {
    pub fn local_agreement(la_n: usize) -> Self {
        Self {
            kind: PolicyKind::LocalAgreement,
            la_n,
            ..Self::default()
        }
    }

    pub fn wait_k(k: usize) -> Self {
        Self {
            kind: PolicyKind::WaitK,
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.la_n < 2 {
            return Err(Error::Config(format!("la_n must be >= 2, got {}", self.la_n)));
        }
        if self.k < 1 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(Error::Config("max_output_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.kind {
            PolicyKind::LocalAgreement => format!("la{}", self.la_n),
            PolicyKind::WaitK => format!("wait{}", self.k),
        }
    }
}

/// A full target hypothesis for the source read so far, tags already stripped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<Token>,
    pub segments_consumed: usize,
}

impl Hypothesis {
    pub fn new(tokens: Vec<Token>, segments_consumed: usize) -> Self {
        Self {
            tokens,
            segments_consumed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyState {
    committed: Vec<Token>,
    /// Most recent hypotheses, oldest first. Only LA keeps more than zero.
    history: VecDeque<Vec<Token>>,
    prefix_conflicts: usize,
    last_step_conflicted: bool,
}

impl PolicyState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn committed(&self) -> &[Token] {
        &self.committed
    }

    pub fn prefix_conflicts(&self) -> usize {
        self.prefix_conflicts
    }

    /// Whether the most recent step saw a hypothesis that no longer extends
    /// the committed output.
    pub fn conflicted(&self) -> bool {
        self.last_step_conflicted
    }

    fn commit(&mut self, tokens: &[Token]) -> Vec<Token> {
        self.committed.extend_from_slice(tokens);
        tokens.to_vec()
    }

    fn flag_conflict(&mut self) {
        self.prefix_conflicts += 1;
        self.last_step_conflicted = true;
    }
}

pub fn longest_common_prefix<'a>(a: &'a [Token], b: &[Token]) -> &'a [Token] {
    let n = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    &a[..n]
}

/// Local Agreement: commits the part of the longest common prefix of the
/// last `la_n` hypotheses that extends beyond what is already committed.
pub fn la_step(state: &mut PolicyState, hypothesis: &Hypothesis, la_n: usize) -> Vec<Token> {
    state.last_step_conflicted = false;
    state.history.push_back(hypothesis.tokens.clone());
    while state.history.len() > la_n {
        state.history.pop_front();
    }
    if state.history.len() < la_n {
        return Vec::new();
    }
    let mut agreed: &[Token] = &state.history[0];
    for h in state.history.iter().skip(1) {
        agreed = longest_common_prefix(agreed, h);
    }
    match agreed.strip_prefix(state.committed.as_slice()) {
        Some(new) => {
            let new = new.to_vec();
            state.commit(&new)
        }
        None => {
            state.flag_conflict();
            Vec::new()
        }
    }
}

/// wait-k at segment granularity: nothing before `k` segments, then one
/// token per step while the hypothesis extends the committed output.
pub fn wait_k_step(
    state: &mut PolicyState,
    segments_read: usize,
    hypothesis: &Hypothesis,
    k: usize,
) -> Vec<Token> {
    state.last_step_conflicted = false;
    if segments_read < k {
        return Vec::new();
    }
    match hypothesis.tokens.strip_prefix(state.committed.as_slice()) {
        Some([next, ..]) => {
            let next = next.clone();
            state.commit(std::slice::from_ref(&next))
        }
        Some([]) => Vec::new(),
        None => {
            state.flag_conflict();
            Vec::new()
        }
    }
}

/// End-of-source flush: commits everything in the final hypothesis past the
/// committed output. A final hypothesis that contradicts committed output
/// commits nothing.
pub fn flush(state: &mut PolicyState, hypothesis: &Hypothesis) -> Vec<Token> {
    state.last_step_conflicted = false;
    match hypothesis.tokens.strip_prefix(state.committed.as_slice()) {
        Some(rest) => {
            let rest = rest.to_vec();
            state.commit(&rest)
        }
        None => {
            state.flag_conflict();
            Vec::new()
        }
    }
}

impl PolicyConfig {
    /// Runs one policy step for the configured kind.
    pub fn step(
        &self,
        state: &mut PolicyState,
        segments_read: usize,
        hypothesis: &Hypothesis,
    ) -> Vec<Token> {
        match self.kind {
            PolicyKind::LocalAgreement => la_step(state, hypothesis, self.la_n),
            PolicyKind::WaitK => wait_k_step(state, segments_read, hypothesis, self.k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleTag {
    Si,
    #[serde(alias = "offline")]
    Off,
    None,
}

/// The style tag to force-decode, resolved to its token forms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleTagChoice {
    pub tag: StyleTag,
    pub tag_token_forms: Vec<Token>,
}

impl StyleTagChoice {
    pub fn none() -> Self {
        Self {
            tag: StyleTag::None,
            tag_token_forms: Vec::new(),
        }
    }

    pub fn si() -> Self {
        Self::from_spec(StyleTag::Si, &TagSpec::si())
    }

    pub fn off() -> Self {
        Self::from_spec(StyleTag::Off, &TagSpec::off())
    }

    pub fn from_spec(tag: StyleTag, spec: &TagSpec) -> Self {
        Self {
            tag,
            tag_token_forms: spec.token_forms.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.tag, self.tag_token_forms.is_empty()) {
            (StyleTag::None, false) => Err(Error::Config(
                "untagged style must not carry tag tokens".into(),
            )),
            (StyleTag::Si | StyleTag::Off, true) => Err(Error::Config(
                "style tag needs at least one token form".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn forced_prefix(&self) -> &[Token] {
        &self.tag_token_forms
    }
}

/// Instructs the agent to force-decode the style tag before free decoding.
pub fn apply_forced_prefix(
    mut request: HypothesisRequest,
    style: &StyleTagChoice,
) -> HypothesisRequest {
    if style.tag != StyleTag::None {
        request.forced_prefix = style.tag_token_forms.clone();
    }
    request
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<Token> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn hyp(s: &str) -> Hypothesis {
        Hypothesis::new(toks(s), 0)
    }

    #[test]
    fn la2_commits_agreed_prefix() {
        let mut st = PolicyState::new();
        assert!(la_step(&mut st, &hyp("A B C"), 2).is_empty());
        assert_eq!(la_step(&mut st, &hyp("A B D"), 2), toks("A B"));
        assert_eq!(la_step(&mut st, &hyp("A B D E"), 2), toks("D"));
        assert_eq!(st.committed(), toks("A B D").as_slice());
    }

    #[test]
    fn la_revision_below_committed_is_a_conflict() {
        let mut st = PolicyState::new();
        la_step(&mut st, &hyp("A B C"), 2);
        la_step(&mut st, &hyp("A B D"), 2);
        assert!(la_step(&mut st, &hyp("X Y"), 2).is_empty());
        assert!(st.conflicted());
        assert_eq!(st.prefix_conflicts(), 1);
        assert_eq!(st.committed(), toks("A B").as_slice());
    }

    #[test]
    fn la_n_commits_stable_hypothesis_at_step_n() {
        for n in 2..6 {
            let mut st = PolicyState::new();
            for step in 1..=n {
                let out = la_step(&mut st, &hyp("A B C"), n);
                if step < n {
                    assert!(out.is_empty());
                } else {
                    assert_eq!(out, toks("A B C"));
                }
            }
        }
    }

    #[test]
    fn wait_k_waits_then_writes_one() {
        let mut st = PolicyState::new();
        assert!(wait_k_step(&mut st, 1, &hyp("A B C"), 3).is_empty());
        assert!(wait_k_step(&mut st, 2, &hyp("A B C"), 3).is_empty());
        assert_eq!(wait_k_step(&mut st, 3, &hyp("A B C"), 3), toks("A"));
        assert_eq!(wait_k_step(&mut st, 4, &hyp("A B C D"), 3), toks("B"));
        assert_eq!(flush(&mut st, &hyp("A B C D E")), toks("C D E"));
    }

    #[test]
    fn wait_k_conflict_commits_nothing() {
        let mut st = PolicyState::new();
        wait_k_step(&mut st, 1, &hyp("A"), 1);
        assert!(wait_k_step(&mut st, 2, &hyp("B C"), 1).is_empty());
        assert!(st.conflicted());
    }

    #[test]
    fn flush_of_empty_hypothesis_commits_nothing() {
        let mut st = PolicyState::new();
        assert!(flush(&mut st, &hyp("")).is_empty());
        assert!(!st.conflicted());
    }

    #[test]
    fn config_validation() {
        assert!(PolicyConfig::local_agreement(1).validate().is_err());
        assert!(PolicyConfig::wait_k(0).validate().is_err());
        assert!(PolicyConfig::default().validate().is_ok());
        assert_eq!(PolicyConfig::default().la_n, 2);
        assert_eq!(PolicyConfig::default().max_output_tokens, 512);
    }

    #[test]
    fn forced_prefix_per_style() {
        let req = HypothesisRequest::new(toks("I bought"), Vec::new());
        let si = StyleTagChoice::from_spec(StyleTag::Si, &TagSpec::si_subword());
        assert_eq!(
            apply_forced_prefix(req.clone(), &si).forced_prefix,
            toks("_< si >")
        );
        assert_eq!(apply_forced_prefix(req.clone(), &StyleTagChoice::none()), req);
        assert_eq!(
            apply_forced_prefix(req, &StyleTagChoice::off()).forced_prefix,
            toks("<off>")
        );
    }

    #[test]
    fn style_validation() {
        assert!(StyleTagChoice::si().validate().is_ok());
        assert!(StyleTagChoice::none().validate().is_ok());
        let bad = StyleTagChoice {
            tag: StyleTag::Si,
            tag_token_forms: vec![],
        };
        assert!(bad.validate().is_err());
    }

    fn brute_lcp(hs: &[Vec<Token>]) -> Vec<Token> {
        let mut out = Vec::new();
        'outer: for i in 0.. {
            let Some(first) = hs[0].get(i) else { break };
            for h in hs {
                if h.get(i) != Some(first) {
                    break 'outer;
                }
            }
            out.push(first.clone());
        }
        out
    }

    fn hyps() -> impl Strategy<Value = Vec<Vec<Token>>> {
        prop::collection::vec(
            prop::collection::vec(prop::sample::select(vec!["A", "B", "C"]), 0..6)
                .prop_map(|v| v.into_iter().map(String::from).collect()),
            1..10,
        )
    }

    proptest! {
        #[test]
        fn la_is_append_only_and_matches_lcp(seq in hyps(), n in 2usize..4) {
            let mut st = PolicyState::new();
            for (t, h) in seq.iter().enumerate() {
                let before = st.committed().to_vec();
                la_step(&mut st, &Hypothesis::new(h.clone(), t + 1), n);
                prop_assert!(st.committed().starts_with(&before));
                if t + 1 >= n {
                    let agreed = brute_lcp(&seq[t + 1 - n..=t]);
                    if agreed.starts_with(&before) {
                        prop_assert_eq!(st.committed(), agreed.as_slice());
                    } else {
                        prop_assert!(st.conflicted());
                    }
                }
            }
        }

        #[test]
        fn wait_k_is_append_only(seq in hyps(), k in 1usize..4) {
            let mut st = PolicyState::new();
            for (t, h) in seq.iter().enumerate() {
                let before = st.committed().to_vec();
                let out = wait_k_step(&mut st, t + 1, &Hypothesis::new(h.clone(), t + 1), k);
                prop_assert!(out.len() <= 1);
                prop_assert!(st.committed().starts_with(&before));
            }
        }
    }
}
