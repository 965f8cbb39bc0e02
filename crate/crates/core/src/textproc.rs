//! Tokenization, style tags and the repetition-removal post-processor.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Token;

/// A style tag: its surface string and the tokens it splits into.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSpec {
    pub surface: String,
    pub token_forms: Vec<Token>,
}

impl TagSpec {
    pub fn new(surface: impl Into<String>, token_forms: Vec<Token>) -> Self {
        Self {
            surface: surface.into(),
            token_forms,
        }
    }

    /// `<si>` as a single vocabulary item.
    pub fn si() -> Self {
        Self::new("<si>", vec!["<si>".into()])
    }

    /// `<off>` as a single vocabulary item.
    pub fn off() -> Self {
        Self::new("<off>", vec!["<off>".into()])
    }

    /// `<si>` as split by a subword model that lacks the tag: `_< si >`.
    pub fn si_subword() -> Self {
        Self::new("<si>", vec!["_<".into(), "si".into(), ">".into()])
    }

    pub fn off_subword() -> Self {
        Self::new("<off>", vec!["_<".into(), "off".into(), ">".into()])
    }
}

pub fn prepend_tag(target: &str, tag: &TagSpec) -> String {
    format!("{}{}", tag.surface, target)
}

/// Inverse of [`prepend_tag`]; `None` when `tagged` does not carry the tag.
pub fn strip_tag<'a>(tagged: &'a str, tag: &TagSpec) -> Option<&'a str> {
    tagged.strip_prefix(tag.surface.as_str())
}

/// Removes a leading forced token sequence, `None` if it is absent.
pub fn strip_forced_tokens<'a>(tokens: &'a [Token], forced: &[Token]) -> Option<&'a [Token]> {
    tokens.strip_prefix(forced)
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3000..=0x303F   // CJK punctuation
        | 0x3040..=0x30FF // kana
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0xFF00..=0xFFEF // full-width forms
    )
}

/// Whitespace tokenizer with a per-character fallback for CJK text.
///
/// Runs of non-CJK characters inside a whitespace chunk stay together, so
/// `(拍手)` becomes `( 拍 手 )` and `hello` stays `hello`.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut run = String::new();
        for c in chunk.chars() {
            if is_cjk(c) {
                if !run.is_empty() {
                    out.push(std::mem::take(&mut run));
                }
                out.push(c.to_string());
            } else {
                run.push(c);
            }
        }
        if !run.is_empty() {
            out.push(run);
        }
    }
    out
}

/// Joins tokens, omitting the space wherever either side of the boundary is
/// a CJK character.
pub fn detokenize(tokens: &[Token]) -> String {
    let mut out = String::new();
    for tok in tokens {
        if let (Some(prev), Some(next)) = (out.chars().last(), tok.chars().next()) {
            if !(is_cjk(prev) || is_cjk(next)) {
                out.push(' ');
            }
        }
        out.push_str(tok);
    }
    out
}

const OPENERS: [char; 4] = ['(', '<', '（', '＜'];
const CLOSERS: [char; 4] = [')', '>', '）', '＞'];

fn has_bracket(tok: &str) -> bool {
    tok.chars().any(|c| OPENERS.contains(&c) || CLOSERS.contains(&c))
}

fn bracket_pair(c: char) -> Option<char> {
    OPENERS.iter().position(|&o| o == c).map(|i| CLOSERS[i])
}

/// Indices of tokens that survive [`remove_bracketed_tokens`].
pub fn bracket_keep_mask(tokens: &[Token]) -> Vec<bool> {
    let mut keep: Vec<bool> = tokens.iter().map(|t| !has_bracket(t)).collect();
    // Bracketed units split over several tokens: drop everything from an
    // opener fragment up to its matching closer.
    let mut i = 0;
    while i < tokens.len() {
        let opener = tokens[i]
            .chars()
            .rev()
            .find(|c| OPENERS.contains(c) || CLOSERS.contains(c))
            .and_then(bracket_pair);
        if let Some(closer) = opener {
            if let Some(off) = tokens[i + 1..].iter().position(|t| t.contains(closer)) {
                let end = i + 1 + off;
                keep[i..=end].iter_mut().for_each(|k| *k = false);
                i = end + 1;
                continue;
            }
        }
        i += 1;
    }
    keep
}

/// Drops bracketed units such as `(拍手)` or `<unk>`, including fragments
/// like `拍手)` or a lone `(`.
pub fn remove_bracketed_tokens(tokens: &[Token]) -> Vec<Token> {
    tokens
        .iter()
        .zip(bracket_keep_mask(tokens))
        .filter_map(|(t, keep)| keep.then(|| t.clone()))
        .collect()
}

/// Length of the prefix kept by [`stop_on_repeated_trigram`].
pub fn trigram_cut(tokens: &[Token]) -> usize {
    let mut counts: HashMap<&[Token], usize> = HashMap::new();
    for end in 3..=tokens.len() {
        let c = counts.entry(&tokens[end - 3..end]).or_insert(0);
        *c += 1;
        if *c == 3 {
            return end - 1;
        }
    }
    tokens.len()
}

/// Truncates right before the token that would complete a third occurrence
/// of any 3-gram. Overlapping occurrences count.
pub fn stop_on_repeated_trigram(tokens: &[Token]) -> Vec<Token> {
    tokens[..trigram_cut(tokens)].to_vec()
}

/// Toggles for the repetition-removal pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmrepFlags {
    pub brackets: bool,
    pub trigram: bool,
}

impl RmrepFlags {
    pub fn all() -> Self {
        Self {
            brackets: true,
            trigram: true,
        }
    }

    pub fn is_noop(&self) -> bool {
        !self.brackets && !self.trigram
    }

    /// Positions in `tokens` that survive the enabled filters, in order.
    /// The bracket filter runs first.
    pub fn kept_positions(&self, tokens: &[Token]) -> Vec<usize> {
        let mut positions: Vec<usize> = if self.brackets {
            bracket_keep_mask(tokens)
                .into_iter()
                .enumerate()
                .filter_map(|(i, k)| k.then_some(i))
                .collect()
        } else {
            (0..tokens.len()).collect()
        };
        if self.trigram {
            let remaining: Vec<Token> = positions.iter().map(|&i| tokens[i].clone()).collect();
            positions.truncate(trigram_cut(&remaining));
        }
        positions
    }

    pub fn apply(&self, tokens: &[Token]) -> Vec<Token> {
        self.kept_positions(tokens)
            .into_iter()
            .map(|i| tokens[i].clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<Token> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn prepend_matches_tagged_training_string() {
        assert_eq!(
            prepend_tag("私は、買った。ペンを、", &TagSpec::si()),
            "<si>私は、買った。ペンを、"
        );
        assert_eq!(prepend_tag("hello", &TagSpec::off()), "<off>hello");
    }

    #[test]
    fn strip_inverts_prepend() {
        let tag = TagSpec::off();
        assert_eq!(strip_tag(&prepend_tag("hello", &tag), &tag), Some("hello"));
        assert_eq!(strip_tag("hello", &tag), None);
        assert_eq!(strip_tag("<si>hello", &tag), None);
    }

    #[test]
    fn subword_tag_forms() {
        assert_eq!(TagSpec::si_subword().token_forms, toks("_< si >"));
        let tagged = [toks("_< si >"), toks("私は 、")].concat();
        assert_eq!(
            strip_forced_tokens(&tagged, &TagSpec::si_subword().token_forms),
            Some(&tagged[3..])
        );
    }

    #[test]
    fn tokenizer_splits_cjk_characters() {
        assert_eq!(tokenize("hello  world"), toks("hello world"));
        assert_eq!(tokenize("私は、"), toks("私 は 、"));
        assert_eq!(tokenize("(拍手) ok"), toks("( 拍 手 ) ok"));
        assert_eq!(tokenize(""), Vec::<Token>::new());
    }

    #[test]
    fn detokenize_inverts_tokenize_on_plain_text() {
        for s in ["私は、買った。ペンを、", "the cat sat", "テンプトは、graffiti"] {
            assert_eq!(detokenize(&tokenize(s)), s);
        }
    }

    #[test]
    fn bracket_examples() {
        assert_eq!(
            remove_bracketed_tokens(&toks("(拍手) (拍手) こんにちは")),
            toks("こんにちは")
        );
        assert_eq!(remove_bracketed_tokens(&toks("拍手) 皆さん")), toks("皆さん"));
        assert_eq!(remove_bracketed_tokens(&toks("こんにちは")), toks("こんにちは"));
        assert_eq!(remove_bracketed_tokens(&toks("( 拍 手 ) 皆 さん")), toks("皆 さん"));
        assert_eq!(remove_bracketed_tokens(&toks("a <unk> b")), toks("a b"));
        // lone opener with no closer only removes itself
        assert_eq!(remove_bracketed_tokens(&toks("a ( b c")), toks("a b c"));
    }

    #[test]
    fn trigram_examples() {
        assert_eq!(
            stop_on_repeated_trigram(&toks("a b c a b c a b c d")),
            toks("a b c a b c a b")
        );
        assert_eq!(stop_on_repeated_trigram(&toks("a b c d")), toks("a b c d"));
        assert_eq!(stop_on_repeated_trigram(&toks("x x x x x")), toks("x x x x"));
        assert_eq!(stop_on_repeated_trigram(&toks("x x")), toks("x x"));
    }

    #[test]
    fn rmrep_runs_brackets_before_trigram() {
        let t = toks("(拍手) (拍手) (拍手) (拍手) (拍手) thanks");
        assert_eq!(RmrepFlags::all().apply(&t), toks("thanks"));
        let only_trigram = RmrepFlags {
            brackets: false,
            trigram: true,
        };
        assert_eq!(only_trigram.apply(&t), toks("(拍手) (拍手) (拍手) (拍手)"));
        assert_eq!(RmrepFlags::default().apply(&t), t);
    }

    /// Counts every occurrence of every 3-gram by comparing all windows
    /// pairwise, and returns the earliest end index at which some 3-gram
    /// reaches its third occurrence.
    fn brute_force_cut(tokens: &[Token]) -> usize {
        for end in 3..=tokens.len() {
            let last = &tokens[end - 3..end];
            let occurrences = (0..=end - 3)
                .filter(|&s| &tokens[s..s + 3] == last)
                .count();
            if occurrences >= 3 {
                return end - 1;
            }
        }
        tokens.len()
    }

    fn small_tokens() -> impl Strategy<Value = Vec<Token>> {
        prop::collection::vec(
            prop::sample::select(vec!["a", "b", "c", "(x)", "x)", "(", "y"]),
            0..14,
        )
        .prop_map(|v| v.into_iter().map(str::to_string).collect())
    }

    proptest! {
        #[test]
        fn bracket_filter_is_idempotent(t in small_tokens()) {
            let once = remove_bracketed_tokens(&t);
            prop_assert_eq!(remove_bracketed_tokens(&once), once.clone());
            prop_assert!(once.len() <= t.len());
        }

        #[test]
        fn trigram_stop_returns_prefix(t in small_tokens()) {
            let out = stop_on_repeated_trigram(&t);
            prop_assert!(t.starts_with(&out));
        }

        #[test]
        fn trigram_cut_matches_brute_force(t in small_tokens()) {
            prop_assert_eq!(trigram_cut(&t), brute_force_cut(&t));
        }

        #[test]
        fn filters_never_grow_output(t in small_tokens()) {
            prop_assert!(RmrepFlags::all().apply(&t).len() <= t.len());
        }
    }
}
