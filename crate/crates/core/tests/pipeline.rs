use std::collections::BTreeMap;
use std::path::PathBuf;

use dialsum::corpus::{load_corpus, DialogueSample, Split};
use dialsum::cutmodel::{train, CutSample, TrainConfig};
use dialsum::generate::{emit_training_pairs, summarize, CutSource, Mode, SketchEchoGenerator, SummarizeOptions};
use dialsum::intent::{default_rules, label_dialogue, IntentLabel};
use dialsum::phrase::{extract_key_phrases, parse_bracketed, tree_matches_turn, KeyPhraseConfig};
use dialsum::segment::{align_segments, strip_highlights, SimVariant};
use dialsum::sketch::{build_sketch, Sketch, SketchScope, TLDR};

fn concert() -> DialogueSample {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/concert.jsonl");
    load_corpus(path, Split::Train).unwrap().samples.remove(0)
}

fn full_sketch(sample: &DialogueSample) -> Sketch {
    let d = &sample.dialogue;
    let target = sample.summary.as_ref().unwrap().tokens();
    let config = KeyPhraseConfig::default();
    let phrases: BTreeMap<usize, _> = d
        .turns
        .iter()
        .map(|t| (t.index, extract_key_phrases(t, None, &target, &config)))
        .filter(|(_, p)| !p.is_empty())
        .collect();
    build_sketch(d, &label_dialogue(d, &default_rules()), &phrases).unwrap()
}

#[test]
fn intents_on_concert_dialogue() {
    let sample = concert();
    let intents = label_dialogue(&sample.dialogue, &default_rules());
    assert_eq!(intents[0], IntentLabel::What);
    assert_eq!(intents[1], IntentLabel::Abstain);
    assert_eq!(intents[7], IntentLabel::Why);
    assert_eq!(intents[8], IntentLabel::Abstain);
}

#[test]
fn key_phrase_at_work_from_tree_and_ngrams() {
    let sample = concert();
    let turn = &sample.dialogue.turns[1];
    let target = sample.summary.as_ref().unwrap().tokens();
    let tree = parse_bracketed(
        "(S (NP Nothing special) (, ,) (S (NP it's) (ADVP just) (NP (NP one) (PP of (NP many boring days))) \
         (PP at (NP work))) (. .) (S (VP can't (VP wait (S (VP to (VP leave)))))) (. .))",
    )
    .unwrap();
    assert!(tree_matches_turn(&tree, turn));
    let from_tree = extract_key_phrases(turn, Some(&tree), &target, &KeyPhraseConfig::default());
    let from_ngrams = extract_key_phrases(turn, None, &target, &KeyPhraseConfig::default());
    assert!(from_tree.iter().any(|p| p.tokens == ["at", "work"]), "{from_tree:?}");
    assert!(from_ngrams.iter().any(|p| p.tokens == ["at", "work"]));
}

#[test]
fn sketch_alignment_and_training_pairs() {
    let sample = concert();
    let sketch = full_sketch(&sample);
    let summary = sample.summary.as_ref().unwrap();
    let seg = align_segments(&sample.dialogue, summary, SimVariant::F1).unwrap();
    assert_eq!(seg.cuts(), [4, 7]);

    let pairs = emit_training_pairs(&sample, &seg, &sketch, SketchScope::Segment).unwrap();
    assert_eq!(pairs.len(), 3);
    let first = &pairs[0];
    assert!(first.source.starts_with("<hl> Morgan: Hey gorgeous"));
    assert!(first.source.contains("well-deserved break. <hl>\nMorgan: Do you"));
    assert!(first.target.starts_with("1 what 2 abstain at work"));
    assert!(first
        .target
        .ends_with("TL;DR Suzanne is at work and is having a break now."));
    for p in &pairs {
        assert_eq!(p.target.matches(TLDR).count(), 1);
        assert_eq!(strip_highlights(&p.source), sample.dialogue.render());
    }
}

#[test]
fn trained_cutter_drives_auto_mode() {
    let sample = concert();
    let summary = sample.summary.as_ref().unwrap();
    let seg = align_segments(&sample.dialogue, summary, SimVariant::F1).unwrap();
    let cut_sample = CutSample {
        intents: label_dialogue(&sample.dialogue, &default_rules()),
        cuts: seg,
        dialogue: sample.dialogue.clone(),
    };
    let cfg = TrainConfig {
        epochs: 3000,
        lr: 0.5,
        ..TrainConfig::default()
    };
    let (model, report) = train(std::slice::from_ref(&cut_sample), &cfg).unwrap();
    assert!(report.final_loss < report.initial_loss);

    let sketch = full_sketch(&sample);
    let run = || {
        summarize(
            &sample.dialogue,
            &sketch,
            Mode::Auto,
            &SketchEchoGenerator,
            CutSource::Model(&model),
            &SummarizeOptions::default(),
        )
        .unwrap()
    };
    let out = run();
    assert_eq!(out.segmentation.cuts(), [4, 7]);
    assert_eq!(out.sentences.len(), 3);
    assert_eq!(out, run());
}
