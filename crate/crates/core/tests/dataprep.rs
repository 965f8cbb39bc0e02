use std::path::Path;
use std::sync::Arc;

use simulst::agent::{toy_translate, ToyAgent, ToyLexicon, ToyStyle};
use simulst::corpus::{read_corpus, TimedUtterance, Token};
use simulst::dataprep::*;
use simulst::policy::StyleTagChoice;
use simulst::textproc::{strip_tag, TagSpec};

fn lexicon() -> Arc<ToyLexicon> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/lexicon.json");
    Arc::new(ToyLexicon::load(&path).unwrap())
}

fn toks(s: &str) -> Vec<Token> {
    s.split_whitespace().map(str::to_string).collect()
}

fn pen() -> TimedUtterance {
    TimedUtterance::new("pen", vec![(300, toks("I")), (250, toks("bought")), (400, toks("a pen"))]).unwrap()
}

fn is_prefix(a: &[Token], b: &[Token]) -> bool {
    a.len() <= b.len() && a.iter().zip(b).all(|(x, y)| x == y)
}

#[test]
fn si_agent_yields_one_pair_per_segment() {
    let mut agent = ToyAgent::new(lexicon(), ToyStyle::Si);
    let pairs = extract_prefix_pairs(&pen(), &mut agent, &StyleTagChoice::none()).unwrap();
    let targets: Vec<Vec<Token>> = pairs.iter().map(|p| p.target.clone()).collect();
    assert_eq!(
        targets,
        vec![toks("watashi-wa"), toks("watashi-wa katta"), toks("watashi-wa katta aru pen-o")]
    );
    assert_eq!(pairs[2].source, toks("I bought a pen"));
}

#[test]
fn revising_offline_agent_yields_fewer_pairs() {
    // t2 = [watashi-wa katta] is revised by t3 = [watashi-wa aru pen-o katta],
    // so its stable part does not grow past t1's.
    let mut agent = ToyAgent::new(lexicon(), ToyStyle::Offline);
    let utt = pen();
    let pairs = extract_prefix_pairs(&utt, &mut agent, &StyleTagChoice::none()).unwrap();
    assert_eq!(pairs.len(), 2);
    assert_eq!(pairs.iter().map(|p| p.segments).collect::<Vec<_>>(), vec![1, 3]);

    // brute force: the stable part is the longest shared prefix, found by
    // trying every length
    let lex = lexicon();
    let full = toy_translate(&lex, &utt.source_tokens(), ToyStyle::Offline);
    for p in &pairs {
        let t = toy_translate(&lex, &p.source, ToyStyle::Offline);
        let best = (0..=t.len().min(full.len())).filter(|&n| t[..n] == full[..n]).max().unwrap();
        assert_eq!(p.target, t[..best].to_vec());
        assert!(is_prefix(&p.target, &full));
    }
}

#[test]
fn one_segment_gives_the_full_translation() {
    let utt = TimedUtterance::new("one", vec![(500, toks("I bought a pen"))]).unwrap();
    let mut agent = ToyAgent::new(lexicon(), ToyStyle::Offline);
    let pairs = extract_prefix_pairs(&utt, &mut agent, &StyleTagChoice::off()).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0].target, toks("watashi-wa aru pen-o katta"));
}

#[test]
fn corpus_extraction_is_ordered_and_chains_grow() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/reorder_corpus.jsonl");
    let mut utts = read_corpus(&path).unwrap();
    utts.reverse();
    let lex = lexicon();
    for style in [StyleTagChoice::si(), StyleTagChoice::off()] {
        let (examples, failures) = extract_corpus(
            &utts,
            || Ok(ToyAgent::new(lex.clone(), ToyStyle::Offline)),
            &style,
            Origin::Si,
            Split::Train,
        )
        .unwrap();
        assert!(failures.is_empty());
        let ids: Vec<&str> = examples.iter().map(|e| e.id.split('#').next().unwrap()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert!(examples.iter().all(CorpusExample::is_aligned));
        assert_eq!(filter_unaligned(examples.clone()), examples);
    }
}

#[test]
fn extraction_failures_are_reported_per_utterance() {
    let utts = vec![pen()];
    let (examples, failures) = extract_corpus(
        &utts,
        || Ok(ToyAgent::new(lexicon(), ToyStyle::Offline)),
        &StyleTagChoice::from_spec(simulst::policy::StyleTag::Si, &TagSpec::new("<fast>", toks("<fast>"))),
        Origin::Si,
        Split::Dev,
    )
    .unwrap();
    assert!(examples.is_empty());
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0].0, "pen");
}

fn example(id: usize, origin: Origin) -> CorpusExample {
    CorpusExample {
        id: format!("{origin:?}{id}"),
        source: toks("a b"),
        token_end_ms: vec![Some(10.0), Some(20.0)],
        target: format!("t{id}"),
        origin,
        split: Split::Train,
    }
}

fn examples(off: usize, si: usize) -> Vec<CorpusExample> {
    (0..off)
        .map(|i| example(i, Origin::Offline))
        .chain((0..si).map(|i| example(i, Origin::Si)))
        .collect()
}

#[test]
fn mixture_conditions() {
    let input = examples(7, 3);
    let count = |c, f| build_mixture(&input, &MixtureConfig::new(c, f, 1).unwrap()).unwrap().manifest.total_lines;
    assert_eq!(count(MixtureCondition::OfflineFt, 1), 7);
    assert_eq!(count(MixtureCondition::SiFt, 1), 3);
    assert_eq!(count(MixtureCondition::MixedFt, 4), 10);
    assert_eq!(count(MixtureCondition::MixedFtStyle, 4), 10);
    assert_eq!(count(MixtureCondition::MixedFtStyleUp, 4), 7 + 4 * 3);
    assert!(MixtureConfig::new(MixtureCondition::MixedFtStyleUp, 0, 1).is_err());
    assert!(build_mixture(&examples(2, 0), &MixtureConfig::new(MixtureCondition::SiFt, 1, 1).unwrap()).is_err());
}

#[test]
fn tags_are_origin_faithful() {
    let input = examples(20, 5);
    let mix = build_mixture(&input, &MixtureConfig::new(MixtureCondition::MixedFtStyleUp, 3, 9).unwrap()).unwrap();
    for line in &mix.lines {
        let origin = tagged_origin(&line.target).expect("every line is tagged");
        let body = strip_tag(&line.target, &origin.tag()).unwrap();
        let src = input.iter().find(|e| e.target == body && e.origin == origin);
        assert!(src.is_some(), "{} has the wrong tag", line.target);
    }
    let untagged = build_mixture(&input, &MixtureConfig::new(MixtureCondition::MixedFt, 3, 9).unwrap()).unwrap();
    assert!(untagged.lines.iter().all(|l| tagged_origin(&l.target).is_none()));
}

#[test]
fn shuffle_is_seeded() {
    let input = examples(30, 10);
    let build = |seed| build_mixture(&input, &MixtureConfig::new(MixtureCondition::MixedFtStyle, 1, seed).unwrap()).unwrap().lines;
    assert_eq!(build(5), build(5));
    assert_ne!(build(5), build(6));
}

#[test]
fn mixture_files() {
    let dir = tempfile::tempdir().unwrap();
    let mix = build_mixture(&examples(3, 1), &MixtureConfig::new(MixtureCondition::MixedFtStyle, 1, 0).unwrap()).unwrap();
    let (train, manifest) = (dir.path().join("train.tsv"), dir.path().join("manifest.json"));
    mix.write(&train, &manifest).unwrap();
    let text = std::fs::read_to_string(&train).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().all(|l| l.split('\t').count() == 2));
    let m: MixtureManifest = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m, mix.manifest);
}

#[test]
fn examples_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ex.jsonl");
    let mut input = examples(2, 2);
    input[1].token_end_ms[0] = None;
    write_examples(&path, &input).unwrap();
    assert_eq!(read_examples(&path).unwrap(), input);
    assert_eq!(filter_unaligned(input.clone()).len(), 3);
}
