//! Corpus-level evaluation: sweep segment sizes, run sessions, post-process,
//! score, and write plot-ready report files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentHandle, ExternalAgent, ToyAgent, ToyLexicon, ToyStyle, DEFAULT_TIMEOUT};
use crate::corpus::{read_corpus, ReferenceStyle, TimedUtterance, Token};
use crate::error::{Error, Result};
use crate::metrics::{AlLengthBasis, Bucket, LatencyReport, QualityReport};
use crate::policy::{PolicyConfig, StyleTag, StyleTagChoice};
use crate::report::{
    hypothesis_file, reference_file, reports_to_csv, to_json_lines, write_file, write_lines,
    MetricReport, SentenceRecord,
};
use crate::session::{run_session, SessionLog};
use crate::textproc::{detokenize, RmrepFlags, TagSpec};

pub const DEFAULT_SEGMENT_SIZES_MS: [u64; 5] = [200, 400, 600, 800, 1000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Toy,
    Process,
    Socket,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Toy agent lexicon (JSON).
    pub lexicon: Option<PathBuf>,
    /// Style the toy agent uses for untagged requests.
    pub default_style: ToyStyle,
    pub command: Option<String>,
    pub args: Vec<String>,
    pub address: Option<String>,
    pub timeout_ms: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            kind: AgentKind::Toy,
            lexicon: None,
            default_style: ToyStyle::Offline,
            command: None,
            args: Vec::new(),
            address: None,
            timeout_ms: DEFAULT_TIMEOUT.as_millis() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleConfig {
    pub tag: StyleTag,
    /// Token forms of the tag; defaults to the tag as one token.
    pub forms: Option<Vec<Token>>,
}

impl Default for StyleConfig {
    fn default() -> Self {
        Self {
            tag: StyleTag::None,
            forms: None,
        }
    }
}

impl StyleConfig {
    pub fn resolve(&self) -> Result<StyleTagChoice> {
        let choice = match (self.tag, &self.forms) {
            (StyleTag::None, _) => StyleTagChoice::none(),
            (tag, Some(forms)) => StyleTagChoice {
                tag,
                tag_token_forms: forms.clone(),
            },
            (StyleTag::Si, None) => StyleTagChoice::si(),
            (StyleTag::Off, None) => StyleTagChoice::off(),
        };
        choice.validate()?;
        Ok(choice)
    }
}

fn default_system() -> String {
    "system".into()
}

fn default_sizes() -> Vec<u64> {
    DEFAULT_SEGMENT_SIZES_MS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_system")]
    pub system: String,
    pub corpus: PathBuf,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub style: StyleConfig,
    #[serde(default = "default_sizes")]
    pub segment_sizes_ms: Vec<u64>,
    #[serde(default)]
    pub rmrep: RmrepFlags,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// References to score against.
    #[serde(default = "default_reference")]
    pub reference: ReferenceStyle,
    #[serde(default)]
    pub al_basis: AlLengthBasis,
}

fn default_reference() -> ReferenceStyle {
    ReferenceStyle::Si
}

impl RunConfig {
    pub fn new(corpus: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            system: default_system(),
            corpus: corpus.into(),
            agent: AgentConfig::default(),
            policy: PolicyConfig::default(),
            style: StyleConfig::default(),
            segment_sizes_ms: default_sizes(),
            rmrep: RmrepFlags::default(),
            output_dir: output_dir.into(),
            seed: 0,
            reference: ReferenceStyle::Si,
            al_basis: AlLengthBasis::Hypothesis,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.corpus);
        rebase(&mut cfg.output_dir);
        if let Some(lex) = cfg.agent.lexicon.as_mut() {
            rebase(lex);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_sizes_ms.is_empty() {
            return Err(Error::Config("segment_sizes_ms must not be empty".into()));
        }
        if self.segment_sizes_ms.contains(&0) {
            return Err(Error::Config("segment sizes must be positive".into()));
        }
        self.policy.validate()?;
        self.style.resolve()?;
        match self.agent.kind {
            AgentKind::Toy if self.agent.lexicon.is_none() => {
                Err(Error::Config("toy agent needs a lexicon".into()))
            }
            AgentKind::Process if self.agent.command.is_none() => {
                Err(Error::Config("process agent needs a command".into()))
            }
            AgentKind::Socket if self.agent.address.is_none() => {
                Err(Error::Config("socket agent needs an address".into()))
            }
            _ => Ok(()),
        }
    }
}

/// The tag vocabulary announced to external agents during the handshake.
pub fn tag_vocabulary(style: &StyleTagChoice) -> BTreeMap<String, Vec<Token>> {
    let mut tags: BTreeMap<String, Vec<Token>> = [TagSpec::si(), TagSpec::off()]
        .into_iter()
        .map(|t| (t.surface, t.token_forms))
        .collect();
    match style.tag {
        StyleTag::Si => tags.insert("<si>".into(), style.tag_token_forms.clone()),
        StyleTag::Off => tags.insert("<off>".into(), style.tag_token_forms.clone()),
        StyleTag::None => None,
    };
    tags
}

pub fn connect_external(config: &AgentConfig, style: &StyleTagChoice) -> Result<ExternalAgent> {
    let timeout = Duration::from_millis(config.timeout_ms);
    let tags = tag_vocabulary(style);
    let agent = match config.kind {
        AgentKind::Process => {
            let cmd = config
                .command
                .as_deref()
                .ok_or_else(|| Error::Config("process agent needs a command".into()))?;
            ExternalAgent::spawn(cmd, &config.args, tags, timeout)?
        }
        AgentKind::Socket => {
            let addr = config
                .address
                .as_deref()
                .ok_or_else(|| Error::Config("socket agent needs an address".into()))?;
            ExternalAgent::connect(addr, tags, timeout)?
        }
        AgentKind::Toy => return Err(Error::Config("not an external agent".into())),
    };
    Ok(agent)
}

/// Everything one evaluation produces, before it is written to disk.
#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub reports: Vec<MetricReport>,
    pub sentences: Vec<SentenceRecord>,
    pub histograms: Vec<(u64, Vec<Bucket>)>,
    /// Session logs after post-processing, per segment size.
    pub logs: Vec<(u64, Vec<SessionLog>)>,
}

enum Runner {
    Toy(ToyAgent),
    External(AgentHandle),
}

impl Runner {
    fn run(
        &mut self,
        utterances: &[TimedUtterance],
        policy: &PolicyConfig,
        style: &StyleTagChoice,
    ) -> Result<Vec<SessionLog>> {
        let one = |agent: &mut dyn crate::agent::Agent, utt: &TimedUtterance| {
            run_session(utt, policy, agent, style).map_err(|e| e.in_utterance(&utt.id))
        };
        match self {
            Runner::Toy(toy) => utterances
                .par_iter()
                .map_init(|| toy.clone(), |agent, utt| one(agent, utt))
                .collect(),
            Runner::External(agent) => utterances.iter().map(|u| one(agent, u)).collect(),
        }
    }
}

/// Runs the sweep on already-loaded utterances.
pub fn evaluate_utterances(config: &RunConfig, utterances: &[TimedUtterance]) -> Result<EvalOutput> {
    config.validate()?;
    if utterances.is_empty() {
        return Err(Error::Data(format!("corpus {} is empty", config.corpus.display())));
    }
    for utt in utterances {
        if utt.reference(config.reference).is_none() {
            return Err(Error::Data(format!(
                "utterance {} has no {:?} reference",
                utt.id, config.reference
            )));
        }
    }
    let style = config.style.resolve()?;
    let mut runner = match config.agent.kind {
        AgentKind::Toy => {
            let path = config.agent.lexicon.as_deref().expect("validated");
            let lexicon = ToyLexicon::load(path)?;
            Runner::Toy(ToyAgent::new(Arc::new(lexicon), config.agent.default_style))
        }
        _ => Runner::External(AgentHandle::External(connect_external(&config.agent, &style)?)),
    };

    let mut out = EvalOutput {
        reports: Vec::new(),
        sentences: Vec::new(),
        histograms: Vec::new(),
        logs: Vec::new(),
    };
    for &segment_ms in &config.segment_sizes_ms {
        let chunked: Vec<TimedUtterance> = utterances
            .iter()
            .map(|u| u.resegment(segment_ms))
            .collect::<Result<_>>()?;
        let logs: Vec<SessionLog> = runner
            .run(&chunked, &config.policy, &style)?
            .into_iter()
            .map(|log| {
                let keep = config.rmrep.kept_positions(&log.output());
                log.retain_outputs(&keep)
            })
            .collect();

        let hyps: Vec<Vec<Token>> = logs.iter().map(SessionLog::output).collect();
        let refs: Vec<Vec<Token>> = chunked
            .iter()
            .map(|u| u.reference(config.reference).expect("checked above").to_vec())
            .collect();
        let ref_lens: Vec<usize> = refs.iter().map(Vec::len).collect();
        let latency = LatencyReport::compute(&logs, &ref_lens, config.al_basis);
        let quality = QualityReport::compute(&hyps, &refs)?;

        out.reports.push(MetricReport {
            system: config.system.clone(),
            segment_ms,
            al_ms: latency.al_ms,
            atd_ms: latency.atd_ms,
            bleu: quality.bleu,
            length_ratio: quality.length_ratio,
        });
        for ((lat, hyp), reference) in latency.per_sentence.iter().zip(&hyps).zip(&refs) {
            out.sentences.push(SentenceRecord {
                system: config.system.clone(),
                segment_ms,
                id: lat.id.clone(),
                al_ms: lat.al_ms,
                al_tokens: lat.al_tokens,
                atd_ms: lat.atd_ms,
                hypothesis: detokenize(hyp),
                reference: detokenize(reference),
            });
        }
        out.histograms.push((segment_ms, quality.length_diff_histogram));
        out.logs.push((segment_ms, logs));
    }
    Ok(out)
}

impl EvalOutput {
    /// Writes `metrics.csv`, `metrics.jsonl`, `sentences.jsonl`,
    /// `length_hist.csv`, per-size session logs, and the hypothesis and
    /// reference text files used for external scoring.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("metrics.csv"), &reports_to_csv(&self.reports))?;
        write_file(&dir.join("metrics.jsonl"), &to_json_lines(&self.reports))?;
        write_file(&dir.join("sentences.jsonl"), &to_json_lines(&self.sentences))?;

        let mut hist = String::from("segment_ms,lower,count\n");
        for (seg, buckets) in &self.histograms {
            for b in buckets {
                hist.push_str(&format!("{seg},{},{}\n", b.lower, b.count));
            }
        }
        write_file(&dir.join("length_hist.csv"), &hist)?;

        for (seg, logs) in &self.logs {
            write_file(&dir.join(format!("sessions.{seg}.jsonl")), &to_json_lines(logs))?;
            let sents: Vec<&SentenceRecord> =
                self.sentences.iter().filter(|s| s.segment_ms == *seg).collect();
            let hyps: Vec<String> = sents.iter().map(|s| s.hypothesis.clone()).collect();
            let refs: Vec<String> = sents.iter().map(|s| s.reference.clone()).collect();
            write_lines(&hypothesis_file(dir, *seg), &hyps)?;
            write_lines(&reference_file(dir, *seg), &refs)?;
        }
        Ok(())
    }
}

/// Loads the corpus, runs the sweep and writes all report files.
pub fn evaluate(config: &RunConfig) -> Result<Vec<MetricReport>> {
    config.validate()?;
    let utterances = read_corpus(&config.corpus)?;
    let out = evaluate_utterances(config, &utterances)?;
    out.write(&config.output_dir)?;
    Ok(out.reports)
}
