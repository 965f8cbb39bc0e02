//! Corpus BLEU, character length ratio and the length-difference histogram.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Token;
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// 0 to 100.
    pub score: f64,
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts(tokens: &[Token], n: usize) -> HashMap<&[Token], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Corpus-level BLEU with clipped n-gram precisions up to 4-grams, no
/// smoothing, single reference per sentence.
pub fn corpus_bleu(hypotheses: &[Vec<Token>], references: &[Vec<Token>]) -> Result<BleuScore> {
    if hypotheses.is_empty() {
        return Err(Error::Data("BLEU over an empty corpus".into()));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Data(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (hyp, reference) in hypotheses.iter().zip(references) {
        hyp_len += hyp.len();
        ref_len += reference.len();
        for n in 1..=MAX_ORDER {
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(hyp, n) {
                matches[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
            totals[n - 1] += hyp.len().saturating_sub(n - 1);
        }
    }
    let mut precisions = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        if totals[n] > 0 {
            precisions[n] = matches[n] as f64 / totals[n] as f64;
        }
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let score = if precisions.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuScore {
        score,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

fn visible_chars(s: &str) -> usize {
    s.chars().filter(|c| !c.is_whitespace()).count()
}

/// Total hypothesis characters over total reference characters.
/// Whitespace is not counted, so the ratio does not depend on how the text
/// was tokenized.
pub fn length_ratio(hypotheses: &[String], references: &[String]) -> Result<f64> {
    if hypotheses.is_empty() || references.is_empty() {
        return Err(Error::Data("length ratio over an empty corpus".into()));
    }
    let hyp: usize = hypotheses.iter().map(|s| visible_chars(s)).sum();
    let reference: usize = references.iter().map(|s| visible_chars(s)).sum();
    if reference == 0 {
        return Err(Error::Data("references have zero length".into()));
    }
    Ok(hyp as f64 / reference as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bucket_width: i64,
    /// Differences are clamped to `[-clamp, clamp]`.
    pub clamp: i64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            bucket_width: 5,
            clamp: 50,
        }
    }
}

/// One histogram bucket: `[lower, lower + width)`, except that the top
/// bucket also holds everything clamped to the upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub lower: i64,
    pub count: usize,
}

/// Histogram of per-sentence `hyp_chars - ref_chars`; every bucket in the
/// clamped range is present, empty or not.
pub fn length_diff_histogram(
    hypotheses: &[String],
    references: &[String],
    spec: HistogramSpec,
) -> Vec<Bucket> {
    let lowest = (-spec.clamp).div_euclid(spec.bucket_width) * spec.bucket_width;
    let highest = spec.clamp.div_euclid(spec.bucket_width) * spec.bucket_width;
    let mut buckets: Vec<Bucket> = (lowest..=highest)
        .step_by(spec.bucket_width as usize)
        .map(|lower| Bucket { lower, count: 0 })
        .collect();
    for (h, r) in hypotheses.iter().zip(references) {
        let diff = (visible_chars(h) as i64 - visible_chars(r) as i64).clamp(-spec.clamp, spec.clamp);
        let lower = diff.div_euclid(spec.bucket_width) * spec.bucket_width;
        let idx = ((lower - lowest) / spec.bucket_width) as usize;
        buckets[idx].count += 1;
    }
    buckets
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub bleu: f64,
    pub length_ratio: f64,
    pub length_diff_histogram: Vec<Bucket>,
}

impl QualityReport {
    /// `hypotheses`/`references` are token sequences; detokenized text is
    /// used for the character-based measures.
    pub fn compute(hypotheses: &[Vec<Token>], references: &[Vec<Token>]) -> Result<Self> {
        let bleu = corpus_bleu(hypotheses, references)?.score;
        let detok = |v: &[Vec<Token>]| -> Vec<String> {
            v.iter().map(|t| crate::textproc::detokenize(t)).collect()
        };
        let (h, r) = (detok(hypotheses), detok(references));
        Ok(Self {
            bleu,
            length_ratio: length_ratio(&h, &r)?,
            length_diff_histogram: length_diff_histogram(&h, &r, HistogramSpec::default()),
        })
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
    fn identity_scores_100() {
        let c = vec![toks("a b c d e"), toks("x y z w")];
        let s = corpus_bleu(&c, &c).unwrap();
        assert!((s.score - 100.0).abs() < 1e-9);
    }

    #[test]
    fn clipping_kills_repeated_unigram() {
        let s = corpus_bleu(&[toks("the the the the")], &[toks("the cat")]).unwrap();
        assert_eq!(s.precisions[0], 0.25);
        assert_eq!(s.precisions[1], 0.0);
        assert_eq!(s.score, 0.0);
    }

    #[test]
    fn brevity_penalty_on_short_hypothesis() {
        // 5-token hypothesis, 7-token reference, every n-gram matches:
        // BLEU = 100 * exp(1 - 7/5)
        let s = corpus_bleu(&[toks("a b c d e")], &[toks("a b c d e f g")]).unwrap();
        assert!((s.score - 67.032_004_603_563_93).abs() < 1e-9);
        assert_eq!(s.precisions, [1.0; 4]);
    }

    #[test]
    fn empty_corpus_and_mismatch_are_errors() {
        assert!(corpus_bleu(&[], &[]).is_err());
        assert!(corpus_bleu(&[toks("a")], &[]).is_err());
    }

    #[test]
    fn length_ratio_examples() {
        let same = vec!["私は買った".to_string()];
        assert_eq!(length_ratio(&same, &same).unwrap(), 1.0);
        let r = length_ratio(&["abcdefghijkl".into()], &["abcdefghij".into()]).unwrap();
        assert!((r - 1.2).abs() < 1e-12);
        assert!(length_ratio(&["a".into()], &["  ".into()]).is_err());
        assert!(length_ratio(&[], &[]).is_err());
    }

    #[test]
    fn histogram_buckets_and_clamping() {
        let h = vec!["aaaaaaa".to_string(), "a".into(), "a".repeat(200)];
        let r = vec!["a".to_string(), "aaaaaaaaaaaa".into(), "a".into()];
        let hist = length_diff_histogram(&h, &r, HistogramSpec::default());
        assert_eq!(hist.len(), 21);
        assert_eq!(hist.first().unwrap().lower, -50);
        let count = |lower| hist.iter().find(|b| b.lower == lower).unwrap().count;
        assert_eq!(count(5), 1); // +6
        assert_eq!(count(-15), 1); // -11
        assert_eq!(count(50), 1); // +199 clamped
        assert_eq!(hist.iter().map(|b| b.count).sum::<usize>(), 3);
    }

    fn corpus() -> impl Strategy<Value = Vec<(Vec<Token>, Vec<Token>)>> {
        let sent = || {
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 0..7)
                .prop_map(|v| v.into_iter().map(String::from).collect::<Vec<_>>())
        };
        prop::collection::vec((sent(), sent()), 1..5)
    }

    proptest! {
        #[test]
        fn bleu_in_range_and_order_invariant(c in corpus()) {
            let (h, r): (Vec<_>, Vec<_>) = c.iter().cloned().unzip();
            let s = corpus_bleu(&h, &r).unwrap().score;
            prop_assert!((0.0..=100.0 + 1e-9).contains(&s));
            let (hr, rr): (Vec<_>, Vec<_>) = c.iter().rev().cloned().unzip();
            prop_assert_eq!(corpus_bleu(&hr, &rr).unwrap().score, s);
        }
    }
}
