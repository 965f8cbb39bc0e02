//! Training-data preparation: alignment filtering, prefix-pair extraction,
//! and the five fine-tuning mixtures.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, HypothesisRequest};
use crate::corpus::{TimedUtterance, Token};
use crate::error::{AgentError, Error, Result};
use crate::policy::{apply_forced_prefix, longest_common_prefix, StyleTagChoice};
use crate::textproc::{detokenize, prepend_tag, strip_tag, TagSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Si,
    #[serde(alias = "off")]
    Offline,
}

impl Origin {
    pub fn tag(self) -> TagSpec {
        match self {
            Origin::Si => TagSpec::si(),
            Origin::Offline => TagSpec::off(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusExample {
    pub id: String,
    pub source: Vec<Token>,
    /// End time of each source token; `None` where alignment failed.
    #[serde(default)]
    pub token_end_ms: Vec<Option<f64>>,
    pub target: String,
    pub origin: Origin,
    pub split: Split,
}

impl CorpusExample {
    pub fn is_aligned(&self) -> bool {
        self.token_end_ms.len() == self.source.len() && self.token_end_ms.iter().all(Option::is_some)
    }
}

/// Keeps only examples whose every source token carries a time.
pub fn filter_unaligned(examples: Vec<CorpusExample>) -> Vec<CorpusExample> {
    examples.into_iter().filter(CorpusExample::is_aligned).collect()
}

pub fn read_examples(path: &Path) -> Result<Vec<CorpusExample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: CorpusExample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if ex.target.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("example {} has an empty target", ex.id),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn write_examples(path: &Path, examples: &[CorpusExample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        let line = serde_json::to_string(ex).expect("example serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixtureCondition {
    OfflineFt,
    SiFt,
    MixedFt,
    MixedFtStyle,
    MixedFtStyleUp,
}

impl MixtureCondition {
    fn uses(self, origin: Origin) -> bool {
        !matches!(
            (self, origin),
            (MixtureCondition::OfflineFt, Origin::Si) | (MixtureCondition::SiFt, Origin::Offline)
        )
    }

    fn tagged(self) -> bool {
        matches!(self, MixtureCondition::MixedFtStyle | MixtureCondition::MixedFtStyleUp)
    }
}

impl fmt::Display for MixtureCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MixtureCondition::OfflineFt => "offline-ft",
            MixtureCondition::SiFt => "si-ft",
            MixtureCondition::MixedFt => "mixed-ft",
            MixtureCondition::MixedFtStyle => "mixed-ft-style",
            MixtureCondition::MixedFtStyleUp => "mixed-ft-style-up",
        })
    }
}

impl MixtureCondition {
    pub const ALL: [MixtureCondition; 5] = [
        MixtureCondition::OfflineFt,
        MixtureCondition::SiFt,
        MixtureCondition::MixedFt,
        MixtureCondition::MixedFtStyle,
        MixtureCondition::MixedFtStyleUp,
    ];
}

impl std::str::FromStr for MixtureCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| {
                let names: Vec<String> = Self::ALL.iter().map(ToString::to_string).collect();
                Error::Config(format!("unknown condition `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub condition: MixtureCondition,
    /// Repetitions of each SI example; only used by `MixedFtStyleUp`.
    pub upsample_factor: usize,
    pub seed: u64,
}

impl MixtureConfig {
    pub fn new(condition: MixtureCondition, upsample_factor: usize, seed: u64) -> Result<Self> {
        if upsample_factor < 1 {
            return Err(Error::Config("upsample factor must be >= 1".into()));
        }
        Ok(Self {
            condition,
            upsample_factor,
            seed,
        })
    }
}

/// Integer factor that best balances SI against offline: `round(offline/si)`,
/// at least 1.
pub fn balancing_factor(offline: usize, si: usize) -> usize {
    if si == 0 {
        return 1;
    }
    ((offline as f64 / si as f64).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureLine {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureManifest {
    pub condition: MixtureCondition,
    pub upsample_factor: usize,
    pub seed: u64,
    pub offline_examples: usize,
    pub si_examples: usize,
    pub offline_lines: usize,
    pub si_lines: usize,
    pub total_lines: usize,
}

#[derive(Debug, Clone)]
pub struct Mixture {
    pub lines: Vec<MixtureLine>,
    pub manifest: MixtureManifest,
}

pub fn build_mixture(examples: &[CorpusExample], config: &MixtureConfig) -> Result<Mixture> {
    let count = |o| examples.iter().filter(|e| e.origin == o).count();
    let (n_off, n_si) = (count(Origin::Offline), count(Origin::Si));
    for (origin, n) in [(Origin::Offline, n_off), (Origin::Si, n_si)] {
        if config.condition.uses(origin) && n == 0 {
            return Err(Error::Data(format!(
                "{} needs {origin:?} examples but the input has none",
                config.condition
            )));
        }
    }
    let si_repeat = if config.condition == MixtureCondition::MixedFtStyleUp {
        config.upsample_factor
    } else {
        1
    };

    let mut lines = Vec::new();
    let (mut off_lines, mut si_lines) = (0, 0);
    for ex in examples.iter().filter(|e| config.condition.uses(e.origin)) {
        let source = ex.source.join(" ");
        if source.contains(['\t', '\n']) || ex.target.contains(['\t', '\n']) {
            return Err(Error::Data(format!("example {} contains a tab or newline", ex.id)));
        }
        let target = if config.condition.tagged() {
            prepend_tag(&ex.target, &ex.origin.tag())
        } else {
            ex.target.clone()
        };
        let repeat = match ex.origin {
            Origin::Si => si_repeat,
            Origin::Offline => 1,
        };
        for _ in 0..repeat {
            lines.push(MixtureLine {
                source: source.clone(),
                target: target.clone(),
            });
        }
        match ex.origin {
            Origin::Si => si_lines += repeat,
            Origin::Offline => off_lines += repeat,
        }
    }
    lines.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));

    let manifest = MixtureManifest {
        condition: config.condition,
        upsample_factor: si_repeat,
        seed: config.seed,
        offline_examples: if config.condition.uses(Origin::Offline) { n_off } else { 0 },
        si_examples: if config.condition.uses(Origin::Si) { n_si } else { 0 },
        offline_lines: off_lines,
        si_lines,
        total_lines: lines.len(),
    };
    Ok(Mixture { lines, manifest })
}

/// Origin implied by a training target's leading tag, if any.
pub fn tagged_origin(target: &str) -> Option<Origin> {
    [Origin::Si, Origin::Offline]
        .into_iter()
        .find(|o| strip_tag(target, &o.tag()).is_some())
}

impl Mixture {
    /// Writes `<source>\t<target>` lines to `train` and the manifest as JSON.
    pub fn write(&self, train: &Path, manifest: &Path) -> Result<()> {
        let file = File::create(train).map_err(|e| Error::io(train, e))?;
        let mut w = BufWriter::new(file);
        for line in &self.lines {
            writeln!(w, "{}\t{}", line.source, line.target).map_err(|e| Error::io(train, e))?;
        }
        w.flush().map_err(|e| Error::io(train, e))?;
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(manifest, json + "\n").map_err(|e| Error::io(manifest, e))
    }
}

/// A source prefix paired with the stable part of its translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixPair {
    pub segments: usize,
    pub source: Vec<Token>,
    pub target: Vec<Token>,
}

fn full_hypothesis<A: Agent + ?Sized>(
    agent: &mut A,
    source: Vec<Token>,
    style: &StyleTagChoice,
) -> Result<Vec<Token>> {
    let request = apply_forced_prefix(HypothesisRequest::new(source, Vec::new()), style);
    let raw = agent.hypothesize(&request)?;
    raw.strip_prefix(request.forced_prefix.as_slice())
        .map(<[Token]>::to_vec)
        .ok_or_else(|| {
            AgentError::ForcedPrefixRejected {
                forced: request.forced_prefix.clone(),
            }
            .into()
        })
}

/// Prefix Alignment: translates every segment prefix and pairs it with the
/// longest common prefix of that translation and the full-sentence one.
///
/// Pairs whose target is empty or does not grow past the previously emitted
/// target are skipped, so the emitted targets form a strictly increasing
/// chain of prefixes of the full translation.
pub fn extract_prefix_pairs<A: Agent + ?Sized>(
    utterance: &TimedUtterance,
    agent: &mut A,
    style: &StyleTagChoice,
) -> Result<Vec<PrefixPair>> {
    agent.reset()?;
    let k = utterance.segments().len();
    let hyps: Vec<Vec<Token>> = (1..=k)
        .map(|i| full_hypothesis(agent, utterance.prefix_tokens(i), style))
        .collect::<Result<_>>()?;
    let full = &hyps[k - 1];
    let mut pairs: Vec<PrefixPair> = Vec::new();
    for (i, hyp) in hyps.iter().enumerate() {
        let target = longest_common_prefix(hyp, full);
        let prev = pairs.last().map_or(0, |p| p.target.len());
        if target.len() > prev {
            pairs.push(PrefixPair {
                segments: i + 1,
                source: utterance.prefix_tokens(i + 1),
                target: target.to_vec(),
            });
        }
    }
    Ok(pairs)
}

/// Converts prefix pairs into training examples; token times come from the
/// utterance's segment timing.
pub fn pairs_to_examples(
    utterance: &TimedUtterance,
    pairs: &[PrefixPair],
    origin: Origin,
    split: Split,
) -> Vec<CorpusExample> {
    let times = utterance.token_end_times_ms();
    pairs
        .iter()
        .map(|p| CorpusExample {
            id: format!("{}#{}", utterance.id, p.segments),
            source: p.source.clone(),
            token_end_ms: times[..p.source.len()].iter().map(|&t| Some(t)).collect(),
            target: detokenize(&p.target),
            origin,
            split,
        })
        .collect()
}

/// Utterances whose extraction failed, with the reason.
pub type ExtractionFailures = Vec<(String, String)>;

/// Runs prefix extraction over a corpus on a worker pool. Each worker builds
/// its own agent. A failing utterance contributes no pairs and is reported.
/// Output is ordered by utterance id.
pub fn extract_corpus<A, F>(
    utterances: &[TimedUtterance],
    make_agent: F,
    style: &StyleTagChoice,
    origin: Origin,
    split: Split,
) -> Result<(Vec<CorpusExample>, ExtractionFailures)>
where
    A: Agent,
    F: Fn() -> Result<A> + Sync,
{
    let mut results: Vec<(String, std::result::Result<Vec<CorpusExample>, String>)> = utterances
        .par_iter()
        .map_init(
            || make_agent().map_err(|e| e.to_string()),
            |agent, utt| {
                let res = match agent {
                    Ok(agent) => extract_prefix_pairs(utt, agent, style)
                        .map(|pairs| pairs_to_examples(utt, &pairs, origin, split))
                        .map_err(|e| e.to_string()),
                    Err(e) => Err(e.clone()),
                };
                (utt.id.clone(), res)
            },
        )
        .collect();
    results.sort_by(|a, b| a.0.cmp(&b.0));
    let mut examples = Vec::new();
    let mut failures = Vec::new();
    for (id, res) in results {
        match res {
            Ok(mut ex) => examples.append(&mut ex),
            Err(e) => failures.push((id, e)),
        }
    }
    Ok((examples, failures))
}
