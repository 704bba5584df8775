//! End-to-end summarization: segment the dialogue, highlight each segment,
//! ask a generator for one sentence per segment and join the results.
//! Also hosts the longest-turn baseline and the training-pair emitter.

mod remote;

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{is_punct_token, split_summary_sentences, Dialogue, DialogueSample};
use crate::cutmodel::CutClassifier;
use crate::error::{Error, Result};
use crate::intent::IntentLabel;
use crate::segment::{cuts_from_probs, insert_highlights, select_cuts_topk, Segmentation, HIGHLIGHT};
use crate::sketch::{split_generated, Sketch, SketchScope, TLDR};

pub use remote::RemoteGenerator;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid request: {0}")]
    Request(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },

    #[error("server returned HTTP {status}")]
    Status { status: u16 },

    #[error("malformed response: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorRequest {
    pub highlighted_text: String,
    pub max_tokens: usize,
}

impl GeneratorRequest {
    /// The text must contain exactly one highlight pair.
    pub fn new(highlighted_text: impl Into<String>, max_tokens: usize) -> std::result::Result<Self, GeneratorError> {
        let highlighted_text = highlighted_text.into();
        let marks = highlighted_text.matches(HIGHLIGHT).count();
        if marks != 2 {
            return Err(GeneratorError::Request(format!(
                "expected 2 {HIGHLIGHT} markers, found {marks}"
            )));
        }
        Ok(GeneratorRequest {
            highlighted_text,
            max_tokens,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorResponse {
    pub text: String,
}

/// What a generator may know about the segment beyond the request text.
#[derive(Debug, Clone, Copy)]
pub struct SegmentContext<'a> {
    pub dialogue: &'a Dialogue,
    /// 1-based segment number.
    pub index: usize,
    /// Inclusive 1-based turn range.
    pub turns: (usize, usize),
    /// The dialogue sketch restricted to the segment.
    pub sketch: &'a Sketch,
}

pub trait Generator: Sync {
    fn generate(
        &self,
        request: &GeneratorRequest,
        context: &SegmentContext<'_>,
    ) -> std::result::Result<GeneratorResponse, GeneratorError>;
}

/// Deterministic stand-in for a trained model: echoes the segment sketch,
/// then one sentence made of the segment's key-phrase words, or of the
/// first segment turn's words when there are none.
#[derive(Debug, Clone, Copy, Default)]
pub struct SketchEchoGenerator;

impl Generator for SketchEchoGenerator {
    fn generate(
        &self,
        _request: &GeneratorRequest,
        context: &SegmentContext<'_>,
    ) -> std::result::Result<GeneratorResponse, GeneratorError> {
        let sketch = context
            .sketch
            .serialize()
            .map_err(|e| GeneratorError::Request(e.to_string()))?;
        let mut words: Vec<&str> = context
            .sketch
            .phrase_tokens()
            .into_iter()
            .filter(|t| !is_punct_token(t))
            .collect();
        let first = context
            .dialogue
            .turn(context.turns.0)
            .ok_or_else(|| GeneratorError::Request(format!("no turn {}", context.turns.0)))?;
        if words.is_empty() {
            words = first
                .tokens
                .iter()
                .map(String::as_str)
                .filter(|t| !is_punct_token(t))
                .collect();
        }
        let sentence = if words.is_empty() {
            format!("{} spoke.", first.speaker)
        } else {
            format!("{}.", words.join(" "))
        };
        Ok(GeneratorResponse {
            text: format!("{sketch} {sentence}"),
        })
    }
}

/// Wraps a closure as a generator, handy for tests and adapters.
pub struct FnGenerator<F>(pub F);

impl<F> Generator for FnGenerator<F>
where
    F: Fn(&GeneratorRequest, &SegmentContext<'_>) -> std::result::Result<GeneratorResponse, GeneratorError> + Sync,
{
    fn generate(
        &self,
        request: &GeneratorRequest,
        context: &SegmentContext<'_>,
    ) -> std::result::Result<GeneratorResponse, GeneratorError> {
        (self.0)(request, context)
    }
}

/// How many summary sentences to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Cut wherever the probability exceeds the threshold.
    Auto,
    /// Exactly `K` sentences.
    Fixed(usize),
    /// The whole dialogue as a single segment.
    One,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Mode::Auto),
            "one" => Ok(Mode::One),
            _ => s
                .strip_prefix("k=")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(Mode::Fixed)
                .ok_or_else(|| Error::Invalid(format!("unknown mode {s:?}; use auto, one or k=K"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Auto => f.write_str("auto"),
            Mode::Fixed(k) => write!(f, "k={k}"),
            Mode::One => f.write_str("one"),
        }
    }
}

/// Where per-turn cut probabilities come from.
#[derive(Debug, Clone, Copy)]
pub enum CutSource<'a> {
    Model(&'a CutClassifier),
    Probs(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummarizeOptions {
    pub threshold: f64,
    pub max_tokens: usize,
}

impl Default for SummarizeOptions {
    fn default() -> Self {
        SummarizeOptions {
            threshold: 0.5,
            max_tokens: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryOutput {
    pub summary: String,
    pub segmentation: Segmentation,
    /// Input sketch of each segment.
    pub sketches: Vec<Sketch>,
    /// Sketch text the generator produced before `TL;DR`, per segment.
    pub generated_sketches: Vec<String>,
    pub sentences: Vec<String>,
    pub generator_calls: usize,
    pub warnings: Vec<String>,
}

/// The segmentation `summarize` would use for this mode and cut source.
pub fn segment_dialogue(
    dialogue: &Dialogue,
    intents: &[IntentLabel],
    mode: Mode,
    cuts: CutSource<'_>,
    threshold: f64,
) -> Result<Segmentation> {
    let n = dialogue.len();
    if mode == Mode::One {
        return Segmentation::single(n);
    }
    let probs = match cuts {
        CutSource::Model(model) => model.predict_probs(dialogue, intents)?,
        CutSource::Probs(p) => {
            if p.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: p.len(),
                });
            }
            p.to_vec()
        }
    };
    match mode {
        Mode::Auto => cuts_from_probs(&probs, threshold),
        Mode::Fixed(k) => select_cuts_topk(&probs, k),
        Mode::One => unreachable!(),
    }
}

/// Summarizes one dialogue. `sketch` supplies the turn intents (for the cut
/// model) and the per-segment context handed to the generator.
pub fn summarize(
    dialogue: &Dialogue,
    sketch: &Sketch,
    mode: Mode,
    generator: &dyn Generator,
    cuts: CutSource<'_>,
    options: &SummarizeOptions,
) -> Result<SummaryOutput> {
    if sketch.len() != dialogue.len() {
        return Err(Error::LengthMismatch {
            expected: dialogue.len(),
            found: sketch.len(),
        });
    }
    let intents: Vec<IntentLabel> = sketch.entries.iter().map(|e| e.intent).collect();
    let segmentation = segment_dialogue(dialogue, &intents, mode, cuts, options.threshold)?;

    let mut out = SummaryOutput {
        summary: String::new(),
        segmentation: segmentation.clone(),
        sketches: Vec::new(),
        generated_sketches: Vec::new(),
        sentences: Vec::new(),
        generator_calls: 0,
        warnings: Vec::new(),
    };
    for (m, (start, end)) in segmentation.segments().into_iter().enumerate() {
        let index = m + 1;
        let highlighted = insert_highlights(dialogue, start, end)?;
        let request = GeneratorRequest::new(highlighted.text, options.max_tokens)
            .map_err(|source| Error::Generator { segment: index, source })?;
        let segment_sketch = sketch.restrict(start, end);
        let context = SegmentContext {
            dialogue,
            index,
            turns: (start, end),
            sketch: &segment_sketch,
        };
        out.generator_calls += 1;
        let response = generator
            .generate(&request, &context)
            .map_err(|source| Error::Generator { segment: index, source })?;
        let split = split_generated(&response.text);
        let mut note = |msg: String| {
            warn!("{}: {msg}", dialogue.id);
            out.warnings.push(msg);
        };
        if !split.marker_found {
            note(format!("segment {index}: response has no {TLDR}"));
        }
        let sentence = split.summary_text;
        if sentence.is_empty() {
            note(format!("segment {index}: empty sentence, skipped"));
        } else {
            let count = split_summary_sentences(&sentence).len();
            if count > 1 {
                note(format!("segment {index}: response has {count} sentences"));
            }
            out.sentences.push(sentence);
        }
        out.generated_sketches.push(split.sketch_text);
        out.sketches.push(segment_sketch);
    }
    out.summary = out.sentences.join(" ");
    Ok(out)
}

/// The `k` turns with the most tokens (earlier turn on ties), each rendered
/// as `"<speaker> said <text>"`, in dialogue order. `k` is clamped to `N`.
pub fn longest_k_baseline(dialogue: &Dialogue, k: usize) -> Result<String> {
    if k == 0 {
        return Err(Error::SegmentCount {
            k,
            n_turns: dialogue.len(),
        });
    }
    let mut ranked: Vec<&crate::corpus::Turn> = dialogue.turns.iter().collect();
    ranked.sort_by(|a, b| b.tokens.len().cmp(&a.tokens.len()).then(a.index.cmp(&b.index)));
    ranked.truncate(k);
    ranked.sort_by_key(|t| t.index);
    Ok(ranked
        .iter()
        .map(|t| format!("{} said {}", t.speaker, t.text))
        .collect::<Vec<_>>()
        .join(" "))
}

/// One generator training example: `{"id", "segment", "source", "target"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub id: String,
    /// 1-based segment number.
    pub segment: usize,
    pub source: String,
    pub target: String,
}

/// One pair per summary sentence: the dialogue with segment `m`
/// highlighted, and the sketch (segment or full) followed by sentence `m`.
pub fn emit_training_pairs(
    sample: &DialogueSample,
    segmentation: &Segmentation,
    sketch: &Sketch,
    scope: SketchScope,
) -> Result<Vec<TrainingPair>> {
    let summary = sample
        .summary
        .as_ref()
        .ok_or_else(|| Error::MissingSummary(sample.id().to_string()))?;
    let dialogue = &sample.dialogue;
    if segmentation.n_turns() != dialogue.len() {
        return Err(Error::LengthMismatch {
            expected: dialogue.len(),
            found: segmentation.n_turns(),
        });
    }
    if segmentation.n_segments() != summary.len() {
        return Err(Error::LengthMismatch {
            expected: summary.len(),
            found: segmentation.n_segments(),
        });
    }
    segmentation
        .segments()
        .into_iter()
        .zip(&summary.sentences)
        .enumerate()
        .map(|(m, ((start, end), sentence))| {
            let source = insert_highlights(dialogue, start, end)?.text;
            let sketch_text = match scope {
                SketchScope::Segment => sketch.restrict(start, end).serialize()?,
                SketchScope::Full => sketch.serialize()?,
            };
            Ok(TrainingPair {
                id: sample.id().to_string(),
                segment: m + 1,
                source,
                target: format!("{sketch_text} {}", sentence.text),
            })
        })
        .collect()
}

/// Summarization output line: `{"id", "summary", "cuts", "mode"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub summary: String,
    pub cuts: Vec<usize>,
    pub mode: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ReferenceSummary;
    use crate::intent::{default_rules, label_dialogue};
    use crate::phrase::Phrase;
    use crate::segment::strip_highlights;
    use crate::sketch::build_sketch;
    use std::collections::BTreeMap;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn rent_dialogue() -> Dialogue {
        Dialogue::from_pairs(
            "rent",
            &[
                ("Kelly", "I still haven't received the rent money. Did you check with your bank?"),
                ("John", "Yes. I definitely sent it last week."),
                ("Kelly", "But I still don't have it. Can you please check that you sent it to the right account."),
                ("John", "Ok. Give me 5 min."),
                ("Kelly", "OK"),
                ("John", "I checked and the money did go out of my account last week."),
                ("Kelly", "What account number did you send it to?"),
                ("John", "44-1278"),
                ("Kelly", "No wonder! My account number is 44-1279. You sent it to someone else's account."),
                ("John", "...! I'm really sorry!"),
                ("Kelly", "I still need the rent money though."),
                ("John", "I'm really sorry I'll have to go to the bank tomorrow and ask if they can re-send it to the right account."),
                ("Kelly", "Thanks !"),
            ],
        )
        .unwrap()
    }

    fn plain_sketch(d: &Dialogue) -> Sketch {
        build_sketch(d, &label_dialogue(d, &default_rules()), &BTreeMap::new()).unwrap()
    }

    #[test]
    fn longest_one_on_rent_dialogue() {
        assert_eq!(
            longest_k_baseline(&rent_dialogue(), 1).unwrap(),
            "John said I'm really sorry I'll have to go to the bank tomorrow and ask if they can re-send it to the right account."
        );
    }

    #[test]
    fn longest_k_boundaries() {
        let d = Dialogue::from_pairs("d", &[("A", "one two"), ("B", "three four"), ("A", "x")]).unwrap();
        assert_eq!(longest_k_baseline(&d, 1).unwrap(), "A said one two");
        assert_eq!(longest_k_baseline(&d, 3).unwrap(), longest_k_baseline(&d, 10).unwrap());
        assert_eq!(
            longest_k_baseline(&d, 3).unwrap(),
            "A said one two B said three four A said x"
        );
        assert!(longest_k_baseline(&d, 0).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("auto".parse::<Mode>().unwrap(), Mode::Auto);
        assert_eq!("one".parse::<Mode>().unwrap(), Mode::One);
        assert_eq!("k=3".parse::<Mode>().unwrap(), Mode::Fixed(3));
        assert!("k=0".parse::<Mode>().is_err());
        assert!("three".parse::<Mode>().is_err());
        assert_eq!(Mode::Fixed(2).to_string(), "k=2");
    }

    #[test]
    fn request_needs_one_highlight_pair() {
        assert!(GeneratorRequest::new("<hl> A: x <hl>", 10).is_ok());
        assert!(GeneratorRequest::new("A: x", 10).is_err());
        assert!(GeneratorRequest::new("<hl> A: <hl> x <hl>", 10).is_err());
    }

    #[test]
    fn echo_generator_phrases_and_fallback() {
        let d = Dialogue::from_pairs("d", &[("A", "I am at work, sadly."), ("B", "ok")]).unwrap();
        let mut kp = BTreeMap::new();
        kp.insert(
            1,
            vec![Phrase {
                tokens: vec!["at".into(), "work".into()],
                span: (2, 4),
                source_turn: 1,
            }],
        );
        let intents = [IntentLabel::Abstain, IntentLabel::Abstain];
        let with = build_sketch(&d, &intents, &kp).unwrap();
        let without = build_sketch(&d, &intents, &BTreeMap::new()).unwrap();
        let request = GeneratorRequest::new(insert_highlights(&d, 1, 2).unwrap().text, 10).unwrap();
        let ctx = |sketch| SegmentContext {
            dialogue: &d,
            index: 1,
            turns: (1, 2),
            sketch,
        };

        let out = SketchEchoGenerator.generate(&request, &ctx(&with)).unwrap();
        assert_eq!(out.text, "1 abstain at work 2 abstain TL;DR at work.");
        assert_eq!(split_generated(&out.text).summary_text, "at work.");

        let out = SketchEchoGenerator.generate(&request, &ctx(&without)).unwrap();
        let split = split_generated(&out.text);
        assert!(split.marker_found);
        assert_eq!(split.summary_text, "i am at work sadly.");
    }

    #[test]
    fn one_mode_wraps_whole_dialogue() {
        let d = rent_dialogue();
        let calls = AtomicUsize::new(0);
        let spy = FnGenerator(|req: &GeneratorRequest, ctx: &SegmentContext<'_>| {
            calls.fetch_add(1, Ordering::SeqCst);
            assert!(req.highlighted_text.starts_with("<hl> Kelly:"));
            assert!(req.highlighted_text.ends_with("Thanks ! <hl>"));
            assert_eq!(ctx.turns, (1, 13));
            Ok(GeneratorResponse {
                text: "x TL;DR Kelly wants the rent.".into(),
            })
        });
        let out = summarize(
            &d,
            &plain_sketch(&d),
            Mode::One,
            &spy,
            CutSource::Probs(&[]),
            &SummarizeOptions::default(),
        )
        .unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(out.summary, "Kelly wants the rent.");
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn auto_mode_without_cuts_is_one_sentence() {
        let d = rent_dialogue();
        let probs = vec![0.2; d.len()];
        let out = summarize(
            &d,
            &plain_sketch(&d),
            Mode::Auto,
            &SketchEchoGenerator,
            CutSource::Probs(&probs),
            &SummarizeOptions::default(),
        )
        .unwrap();
        assert_eq!(out.segmentation.n_segments(), 1);
        assert_eq!(out.sentences.len(), 1);
    }

    #[test]
    fn fixed_three_on_nine_turns() {
        let pairs: Vec<(String, String)> = (0..9)
            .map(|i| {
                (
                    if i % 2 == 0 { "A" } else { "B" }.to_string(),
                    format!("turn number {i}"),
                )
            })
            .collect();
        let d = Dialogue::from_pairs("nine", &pairs).unwrap();
        let probs = [0.1, 0.8, 0.2, 0.3, 0.9, 0.1, 0.0, 0.4, 0.5];
        let out = summarize(
            &d,
            &plain_sketch(&d),
            Mode::Fixed(3),
            &SketchEchoGenerator,
            CutSource::Probs(&probs),
            &SummarizeOptions::default(),
        )
        .unwrap();
        assert_eq!(out.segmentation.cuts(), [2, 5]);
        assert_eq!((out.generator_calls, out.sentences.len()), (3, 3));
        assert_eq!(out.summary, out.sentences.join(" "));
        assert!(summarize(
            &d,
            &plain_sketch(&d),
            Mode::Fixed(10),
            &SketchEchoGenerator,
            CutSource::Probs(&probs),
            &SummarizeOptions::default()
        )
        .is_err());
    }

    #[test]
    fn generator_problems() {
        let d = rent_dialogue();
        let probs: Vec<f64> = (0..d.len()).map(|i| if i == 3 { 0.9 } else { 0.1 }).collect();
        let failing = FnGenerator(|_: &GeneratorRequest, ctx: &SegmentContext<'_>| {
            if ctx.index == 2 {
                Err(GeneratorError::Status { status: 503 })
            } else {
                Ok(GeneratorResponse {
                    text: "TL;DR fine.".into(),
                })
            }
        });
        let opts = SummarizeOptions::default();
        let err = summarize(
            &d,
            &plain_sketch(&d),
            Mode::Auto,
            &failing,
            CutSource::Probs(&probs),
            &opts,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Generator { segment: 2, .. }));

        let sloppy = FnGenerator(|_: &GeneratorRequest, ctx: &SegmentContext<'_>| {
            Ok(GeneratorResponse {
                text: if ctx.index == 1 {
                    "TL;DR   ".into()
                } else {
                    "One. Two.".into()
                },
            })
        });
        let out = summarize(
            &d,
            &plain_sketch(&d),
            Mode::Auto,
            &sloppy,
            CutSource::Probs(&probs),
            &opts,
        )
        .unwrap();
        assert_eq!(out.summary, "One. Two.");
        assert_eq!(out.warnings.len(), 3);
    }

    #[test]
    fn zero_model_gives_one_sentence() {
        let d = rent_dialogue();
        let model = CutClassifier::zeros();
        let out = summarize(
            &d,
            &plain_sketch(&d),
            Mode::Auto,
            &SketchEchoGenerator,
            CutSource::Model(&model),
            &SummarizeOptions::default(),
        )
        .unwrap();
        assert!(out.segmentation.cuts().is_empty());
        assert_eq!(out.sentences.len(), 1);
    }

    #[test]
    fn training_pairs() {
        let d = Dialogue::from_pairs("d", &[("A", "what's up?"), ("B", "at work"), ("A", "see you at six")]).unwrap();
        let summary = ReferenceSummary::from_sentences(&["B is at work.", "They meet at six."]).unwrap();
        let sample = DialogueSample {
            dialogue: d.clone(),
            summary: Some(summary),
        };
        let seg = Segmentation::new(vec![2], 3).unwrap();
        let sketch = plain_sketch(&d);
        let pairs = emit_training_pairs(&sample, &seg, &sketch, SketchScope::Segment).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(
            pairs[0].source,
            "<hl> A: what's up?\nB: at work <hl>\nA: see you at six"
        );
        assert_eq!(pairs[0].target, "1 what 2 abstain TL;DR B is at work.");
        assert_eq!(pairs[1].target, "3 abstain TL;DR They meet at six.");
        for p in &pairs {
            assert_eq!(p.target.matches(TLDR).count(), 1);
            assert_eq!(strip_highlights(&p.source), d.render());
        }
        let full = emit_training_pairs(&sample, &seg, &sketch, SketchScope::Full).unwrap();
        assert!(full[1].target.starts_with("1 what 2 abstain 3 abstain TL;DR"));

        let bare = DialogueSample {
            dialogue: d,
            summary: None,
        };
        assert!(matches!(
            emit_training_pairs(&bare, &seg, &sketch, SketchScope::Segment),
            Err(Error::MissingSummary(_))
        ));
    }
}
