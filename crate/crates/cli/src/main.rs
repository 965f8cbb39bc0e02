//! `simulst`: command-line front end for the simultaneous translation harness.

use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use simulst::agent::{serve, AgentHandle, ToyAgent, ToyLexicon, ToyStyle};
use simulst::corpus::{read_corpus, ReferenceStyle};
use simulst::dataprep::{
    balancing_factor, build_mixture, extract_corpus, filter_unaligned, read_examples, write_examples,
    MixtureCondition, MixtureConfig, Origin, Split,
};
use simulst::eval::{connect_external, evaluate, AgentConfig, AgentKind, RunConfig, StyleConfig};
use simulst::metrics::AlLengthBasis;
use simulst::policy::{PolicyKind, StyleTag};
use simulst::report::{import_external_scores, reports_to_csv};
use simulst::textproc::{detokenize, tokenize, RmrepFlags};
use simulst::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "simulst", version, about = "Simultaneous translation evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run sessions over a corpus at each segment size and write reports.
    Evaluate(EvaluateArgs),
    /// Build a training mixture from SI and offline examples.
    PrepareMixture(MixtureArgs),
    /// Extract prefix-to-prefix training pairs from a timed corpus.
    ExtractPrefixes(ExtractArgs),
    /// Apply repetition removal to a text file, one sentence per line.
    Postprocess(PostprocessArgs),
    /// Import sentence scores from an external scorer into a run directory.
    ScoreExchange(ScoreArgs),
    /// Serve the toy agent over stdin/stdout using the agent protocol.
    #[command(hide = true)]
    ServeToy {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long, value_enum, default_value_t = StyleArg::Off)]
        default_style: StyleArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    La,
    WaitK,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StyleArg {
    Si,
    Off,
    None,
}

impl StyleArg {
    fn tag(self) -> StyleTag {
        match self {
            StyleArg::Si => StyleTag::Si,
            StyleArg::Off => StyleTag::Off,
            StyleArg::None => StyleTag::None,
        }
    }

    fn toy(self) -> ToyStyle {
        match self {
            StyleArg::Si => ToyStyle::Si,
            _ => ToyStyle::Offline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentArg {
    Toy,
    Process,
    Socket,
}

/// Agent selection shared by `evaluate` and `extract-prefixes`.
#[derive(Args, Default)]
struct AgentArgs {
    #[arg(long, value_enum)]
    agent: Option<AgentArg>,
    /// Lexicon for the toy agent.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Program to spawn for a process agent.
    #[arg(long)]
    agent_command: Option<String>,
    /// Argument passed to the agent program (repeatable).
    #[arg(long = "agent-arg", allow_hyphen_values = true)]
    agent_args: Vec<String>,
    /// host:port of a socket agent.
    #[arg(long)]
    agent_address: Option<String>,
    #[arg(long)]
    timeout_ms: Option<u64>,
}

impl AgentArgs {
    fn apply(&self, cfg: &mut AgentConfig) {
        if let Some(a) = self.agent {
            cfg.kind = match a {
                AgentArg::Toy => AgentKind::Toy,
                AgentArg::Process => AgentKind::Process,
                AgentArg::Socket => AgentKind::Socket,
            };
        }
        if let Some(l) = &self.lexicon {
            cfg.lexicon = Some(l.clone());
        }
        if let Some(c) = &self.agent_command {
            cfg.command = Some(c.clone());
        }
        if !self.agent_args.is_empty() {
            cfg.args = self.agent_args.clone();
        }
        if let Some(a) = &self.agent_address {
            cfg.address = Some(a.clone());
        }
        if let Some(t) = self.timeout_ms {
            cfg.timeout_ms = t;
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// TOML run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    system: Option<String>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Number of hypotheses that must agree (LA-n).
    #[arg(long)]
    la_n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_output_tokens: Option<usize>,
    #[arg(long, value_enum)]
    style: Option<StyleArg>,
    /// Token forms of the style tag, space separated (e.g. "_< si >").
    #[arg(long)]
    tag_forms: Option<String>,
    /// Comma-separated segment sizes in milliseconds.
    #[arg(long, value_delimiter = ',')]
    segment_sizes: Option<Vec<u64>>,
    #[arg(long, value_enum)]
    reference: Option<StyleArg>,
    /// Length used for the AL rate term.
    #[arg(long, value_enum)]
    al_basis: Option<BasisArg>,
    /// Enable both repetition-removal filters.
    #[arg(long)]
    rmrep: bool,
    /// Disable repetition removal even if the config enables it.
    #[arg(long, conflicts_with = "rmrep")]
    no_rmrep: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    agent: AgentArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Hypothesis,
    Reference,
}

#[derive(Args)]
struct MixtureArgs {
    /// Example files (JSON lines) with SI and/or offline examples.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    condition: MixtureCondition,
    /// SI repetition factor for mixed-ft-style-up; defaults to
    /// round(offline / SI).
    #[arg(long)]
    factor: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    split: SplitArg,
    /// Output training file (source<TAB>target).
    #[arg(long)]
    out: PathBuf,
    /// Manifest path; defaults to `<out>.manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OriginArg {
    Si,
    Offline,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    origin: OriginArg,
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    split: SplitArg,
    /// Style tag forced while translating prefixes.
    #[arg(long, value_enum, default_value_t = StyleArg::None)]
    style: StyleArg,
    /// Style the toy agent uses for untagged requests.
    #[arg(long, value_enum, default_value_t = StyleArg::Off)]
    default_style: StyleArg,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    agent: AgentArgs,
}

#[derive(Args)]
struct PostprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Only remove bracketed tokens (default: both filters).
    #[arg(long)]
    brackets: bool,
    /// Only stop on a repeated 3-gram (default: both filters).
    #[arg(long)]
    trigram: bool,
}

#[derive(Args)]
struct ScoreArgs {
    /// Directory written by `evaluate`.
    #[arg(long)]
    run_dir: PathBuf,
    #[arg(long)]
    system: String,
    #[arg(long)]
    segment_ms: u64,
    /// Metric name, e.g. bleurt.
    #[arg(long)]
    metric: String,
    /// One score per line, aligned with hyp.<segment_ms>.txt.
    #[arg(long)]
    scores: PathBuf,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 1,
        ErrorKind::Agent => 2,
        ErrorKind::Data => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Evaluate(args) => run_evaluate(args),
        Command::PrepareMixture(args) => run_mixture(args),
        Command::ExtractPrefixes(args) => run_extract(args),
        Command::Postprocess(args) => run_postprocess(args),
        Command::ScoreExchange(args) => {
            let rec = import_external_scores(&args.run_dir, &args.system, args.segment_ms, &args.metric, &args.scores)?;
            println!("{} {} ms {}: {:.6} over {} sentences", rec.system, rec.segment_ms, rec.metric, rec.score, rec.sentences);
            Ok(())
        }
        Command::ServeToy { lexicon, default_style } => {
            let lexicon = ToyLexicon::load(&lexicon)?;
            let mut agent = ToyAgent::new(Arc::new(lexicon), default_style.toy());
            let stdin = io::stdin().lock();
            let stdout = io::stdout().lock();
            serve(&mut agent, stdin, stdout).map_err(|e| Error::Agent(e.into()))
        }
    }
}

fn run_config(args: &EvaluateArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let missing = |flag: &str| Error::Config(format!("{flag} is required without --config"));
            let corpus = args.corpus.clone().ok_or_else(|| missing("--corpus"))?;
            let out = args.output_dir.clone().ok_or_else(|| missing("--output-dir"))?;
            RunConfig::new(corpus, out)
        }
    };
    if let Some(c) = &args.corpus {
        cfg.corpus = c.clone();
    }
    if let Some(o) = &args.output_dir {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = &args.system {
        cfg.system = s.clone();
    }
    if let Some(p) = args.policy {
        cfg.policy.kind = match p {
            PolicyArg::La => PolicyKind::LocalAgreement,
            PolicyArg::WaitK => PolicyKind::WaitK,
        };
    }
    if let Some(n) = args.la_n {
        cfg.policy.la_n = n;
    }
    if let Some(k) = args.k {
        cfg.policy.k = k;
    }
    if let Some(m) = args.max_output_tokens {
        cfg.policy.max_output_tokens = m;
    }
    if let Some(s) = args.style {
        cfg.style.tag = s.tag();
    }
    if let Some(f) = &args.tag_forms {
        cfg.style.forms = Some(f.split_whitespace().map(str::to_string).collect());
    }
    if let Some(sizes) = &args.segment_sizes {
        cfg.segment_sizes_ms = sizes.clone();
    }
    match args.reference {
        Some(StyleArg::Si) => cfg.reference = ReferenceStyle::Si,
        Some(StyleArg::Off) => cfg.reference = ReferenceStyle::Off,
        Some(StyleArg::None) => return Err(Error::Config("--reference must be si or off".into())),
        None => {}
    }
    if let Some(b) = args.al_basis {
        cfg.al_basis = match b {
            BasisArg::Hypothesis => AlLengthBasis::Hypothesis,
            BasisArg::Reference => AlLengthBasis::Reference,
        };
    }
    if args.rmrep {
        cfg.rmrep = RmrepFlags::all();
    }
    if args.no_rmrep {
        cfg.rmrep = RmrepFlags::default();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    args.agent.apply(&mut cfg.agent);
    Ok(cfg)
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg = run_config(&args)?;
    let reports = evaluate(&cfg)?;
    print!("{}", reports_to_csv(&reports));
    eprintln!("reports written to {}", cfg.output_dir.display());
    Ok(())
}

fn run_mixture(args: MixtureArgs) -> Result<()> {
    let mut examples = Vec::new();
    for path in &args.inputs {
        examples.extend(read_examples(path)?);
    }
    let split: Split = args.split.into();
    examples.retain(|e| e.split == split);
    let before = examples.len();
    let examples = filter_unaligned(examples);
    if examples.len() < before {
        eprintln!("dropped {} examples without full timing", before - examples.len());
    }
    let factor = match args.factor {
        Some(f) => f,
        None if args.condition == MixtureCondition::MixedFtStyleUp => {
            let count = |o| examples.iter().filter(|e| e.origin == o).count();
            balancing_factor(count(Origin::Offline), count(Origin::Si))
        }
        None => 1,
    };
    let mixture = build_mixture(&examples, &MixtureConfig::new(args.condition, factor, args.seed)?)?;
    let manifest = args.manifest.unwrap_or_else(|| with_suffix(&args.out, ".manifest.json"));
    mixture.write(&args.out, &manifest)?;
    let m = &mixture.manifest;
    println!(
        "{}: {} lines ({} offline + {} SI, factor {})",
        m.condition, m.total_lines, m.offline_lines, m.si_lines, m.upsample_factor
    );
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run_extract(args: ExtractArgs) -> Result<()> {
    let utterances = read_corpus(&args.corpus)?;
    let mut agent_cfg = AgentConfig {
        default_style: args.default_style.toy(),
        ..AgentConfig::default()
    };
    args.agent.apply(&mut agent_cfg);
    let style = StyleConfig {
        tag: args.style.tag(),
        forms: None,
    }
    .resolve()?;
    let origin = match args.origin {
        OriginArg::Si => Origin::Si,
        OriginArg::Offline => Origin::Offline,
    };

    let (examples, failures) = match agent_cfg.kind {
        AgentKind::Toy => {
            let path = agent_cfg
                .lexicon
                .as_deref()
                .ok_or_else(|| Error::Config("toy agent needs --lexicon".into()))?;
            let lexicon = Arc::new(ToyLexicon::load(path)?);
            let default_style = agent_cfg.default_style;
            extract_corpus(
                &utterances,
                || Ok(AgentHandle::BuiltinToy(ToyAgent::new(lexicon.clone(), default_style))),
                &style,
                origin,
                args.split.into(),
            )?
        }
        _ => extract_corpus(
            &utterances,
            || connect_external(&agent_cfg, &style).map(AgentHandle::External),
            &style,
            origin,
            args.split.into(),
        )?,
    };
    for (id, reason) in &failures {
        eprintln!("warning: {id}: {reason}");
    }
    if !utterances.is_empty() && failures.len() == utterances.len() {
        return Err(Error::Agent(simulst::AgentError::Unexpected {
            expected: "at least one successful utterance",
            got: format!("{} failures", failures.len()),
        }));
    }
    write_examples(&args.out, &examples)?;
    println!("{} pairs from {} utterances", examples.len(), utterances.len() - failures.len());
    Ok(())
}

fn run_postprocess(args: PostprocessArgs) -> Result<()> {
    let flags = if args.brackets || args.trigram {
        RmrepFlags {
            brackets: args.brackets,
            trigram: args.trigram,
        }
    } else {
        RmrepFlags::all()
    };
    let input = std::fs::File::open(&args.input).map_err(|e| io_error(&args.input, e))?;
    let output = std::fs::File::create(&args.output).map_err(|e| io_error(&args.output, e))?;
    let mut w = BufWriter::new(output);
    for line in io::BufReader::new(input).lines() {
        let line = line.map_err(|e| io_error(&args.input, e))?;
        let cleaned = detokenize(&flags.apply(&tokenize(&line)));
        writeln!(w, "{cleaned}").map_err(|e| io_error(&args.output, e))?;
    }
    w.flush().map_err(|e| io_error(&args.output, e))
}

fn io_error(path: &Path, source: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
