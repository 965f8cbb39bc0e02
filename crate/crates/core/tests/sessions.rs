use std::path::Path;
use std::sync::Arc;

use proptest::prelude::*;
use simulst::agent::{ToyAgent, ToyLexicon, ToyStyle};
use simulst::corpus::{TimedUtterance, Token};
use simulst::policy::{longest_common_prefix, PolicyConfig, StyleTagChoice};
use simulst::session::{run_session, run_session_traced, Event};

fn lexicon() -> Arc<ToyLexicon> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/lexicon.json");
    Arc::new(ToyLexicon::load(&path).unwrap())
}

fn toks(s: &str) -> Vec<Token> {
    s.split_whitespace().map(str::to_string).collect()
}

fn i_bought_a_pen() -> TimedUtterance {
    TimedUtterance::new("pen", vec![(300, toks("I")), (250, toks("bought")), (400, toks("a pen"))]).unwrap()
}

#[test]
fn la2_offline_commits_lcp_of_first_two_hypotheses() {
    // h1 = [watashi-wa], h2 = [watashi-wa katta]: lcp = [watashi-wa].
    // h3 moves the verb behind the object, so nothing new agrees until the
    // flush, which continues from the committed prefix.
    let mut agent = ToyAgent::new(lexicon(), ToyStyle::Offline);
    let run = run_session_traced(&i_bought_a_pen(), &PolicyConfig::local_agreement(2), &mut agent, &StyleTagChoice::none())
        .unwrap();
    assert_eq!(run.steps[0].hypothesis, toks("watashi-wa"));
    assert_eq!(run.steps[1].hypothesis, toks("watashi-wa katta"));
    assert_eq!(run.steps[1].committed, toks("watashi-wa"));
    assert_eq!(run.steps[2].hypothesis, toks("watashi-wa aru pen-o katta"));
    assert_eq!(run.steps[2].committed, toks("watashi-wa"));
    assert_eq!(run.log.output(), toks("watashi-wa aru pen-o katta"));
    let times: Vec<u64> = run.log.writes().map(|(_, t)| t).collect();
    assert_eq!(times, vec![550, 950, 950, 950]);
}

#[test]
fn la2_si_commits_one_segment_behind() {
    let mut agent = ToyAgent::new(lexicon(), ToyStyle::Offline);
    let log = run_session(&i_bought_a_pen(), &PolicyConfig::local_agreement(2), &mut agent, &StyleTagChoice::si())
        .unwrap();
    let writes: Vec<(&Token, u64)> = log.writes().collect();
    let expect = toks("watashi-wa katta aru pen-o");
    assert_eq!(
        writes,
        vec![(&expect[0], 550), (&expect[1], 950), (&expect[2], 950), (&expect[3], 950)]
    );
    assert!(log.output().iter().all(|t| t != "<si>"));
}

#[test]
fn wait_k_on_toy_agent() {
    let mut agent = ToyAgent::new(lexicon(), ToyStyle::Offline);
    let log = run_session(&i_bought_a_pen(), &PolicyConfig::wait_k(2), &mut agent, &StyleTagChoice::si()).unwrap();
    let first = log.writes().next().unwrap();
    assert_eq!(first, (&"watashi-wa".to_string(), 550));
    assert_eq!(log.output(), toks("watashi-wa katta aru pen-o"));
}

fn vocabulary(lex: &ToyLexicon) -> Vec<String> {
    lex.entries.keys().cloned().collect()
}

prop_compose! {
    fn utterance(vocab: Vec<String>)(
        segs in prop::collection::vec(
            (1u64..900, prop::collection::vec(prop::sample::select(vocab), 0..3)),
            1..10,
        )
    ) -> TimedUtterance {
        TimedUtterance::new("p", segs).unwrap()
    }
}

fn policy() -> impl Strategy<Value = PolicyConfig> {
    prop_oneof![
        (2usize..5).prop_map(PolicyConfig::local_agreement),
        (1usize..5).prop_map(PolicyConfig::wait_k),
    ]
}

fn style() -> impl Strategy<Value = StyleTagChoice> {
    prop_oneof![
        Just(StyleTagChoice::none()),
        Just(StyleTagChoice::si()),
        Just(StyleTagChoice::off()),
    ]
}

proptest! {
    #[test]
    fn sessions_are_deterministic_and_well_timed(
        utt in utterance(vocabulary(&lexicon())),
        policy in policy(),
        style in style(),
    ) {
        let lex = lexicon();
        let a = run_session_traced(&utt, &policy, &mut ToyAgent::new(lex.clone(), ToyStyle::Offline), &style).unwrap();
        let b = run_session_traced(&utt, &policy, &mut ToyAgent::new(lex, ToyStyle::Offline), &style).unwrap();
        prop_assert_eq!(serde_json::to_string(&a.log).unwrap(), serde_json::to_string(&b.log).unwrap());

        let log = &a.log;
        prop_assert_eq!(log.check_invariants(), Ok(()));
        let total = utt.total_duration_ms();
        let mut read_times = vec![];
        let mut last = 0;
        for e in &log.events {
            let t = match e {
                Event::Read { end_ms, .. } => { read_times.push(*end_ms); *end_ms }
                Event::Write { emit_ms, .. } => {
                    prop_assert!(read_times.last() == Some(emit_ms) || *emit_ms == total);
                    *emit_ms
                }
            };
            prop_assert!(t >= last && t <= total);
            last = t;
        }

        // append-only across steps; the flush ends at the final hypothesis
        for w in a.steps.windows(2) {
            prop_assert!(w[1].committed.starts_with(&w[0].committed));
        }
        let final_step = a.steps.last().unwrap();
        prop_assert!(final_step.is_flush);
        prop_assert_eq!(&final_step.committed, &log.output());
        prop_assert_eq!(&final_step.hypothesis, &log.output());
    }

    #[test]
    fn la_commits_agree_with_every_recent_hypothesis(
        utt in utterance(vocabulary(&lexicon())),
        n in 2usize..5,
    ) {
        let mut agent = ToyAgent::new(lexicon(), ToyStyle::Offline);
        let run = run_session_traced(&utt, &PolicyConfig::local_agreement(n), &mut agent, &StyleTagChoice::off()).unwrap();
        let steps: Vec<_> = run.steps.iter().filter(|s| !s.is_flush).collect();
        for (i, s) in steps.iter().enumerate() {
            if i + 1 < n || s.conflict {
                continue;
            }
            let window = &steps[i + 1 - n..=i];
            let mut agreed: &[Token] = &window[0].hypothesis;
            for h in window {
                agreed = longest_common_prefix(agreed, &h.hypothesis);
            }
            if agreed.len() > s.committed.len() {
                prop_assert!(false, "agreed {:?} beyond committed {:?}", agreed, s.committed);
            }
        }
    }
}
