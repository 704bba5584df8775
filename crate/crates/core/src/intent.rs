//! Rule-based interrogative-intent labeling.
//!
//! Each turn gets exactly one [`IntentLabel`]. Rules are token patterns
//! matched case-insensitively against the turn tokens; the first category in
//! [`IntentLabel::PRIORITY`] with a matching rule wins and `Abstain` is the
//! fallback. `Confirm` additionally requires the matched sentence to be a
//! question.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Dialogue, Turn};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntentLabel {
    Why,
    What,
    Where,
    When,
    Confirm,
    Abstain,
}

impl IntentLabel {
    pub const ALL: [IntentLabel; 6] = [
        IntentLabel::Why,
        IntentLabel::What,
        IntentLabel::Where,
        IntentLabel::When,
        IntentLabel::Confirm,
        IntentLabel::Abstain,
    ];

    /// Matching order; earlier categories win ties.
    pub const PRIORITY: [IntentLabel; 5] = [
        IntentLabel::When,
        IntentLabel::Why,
        IntentLabel::Where,
        IntentLabel::What,
        IntentLabel::Confirm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntentLabel::Why => "why",
            IntentLabel::What => "what",
            IntentLabel::Where => "where",
            IntentLabel::When => "when",
            IntentLabel::Confirm => "confirm",
            IntentLabel::Abstain => "abstain",
        }
    }

    /// Position in [`IntentLabel::ALL`], used for one-hot features.
    pub fn ordinal(self) -> usize {
        IntentLabel::ALL.iter().position(|&l| l == self).unwrap()
    }

    fn priority(self) -> usize {
        IntentLabel::PRIORITY
            .iter()
            .position(|&l| l == self)
            .unwrap_or(usize::MAX)
    }
}

impl fmt::Display for IntentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IntentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim_start_matches('#').to_ascii_lowercase();
        IntentLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Rule(format!("unknown intent category {s:?}")))
    }
}

/// Where a pattern may match inside an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anchor {
    /// First tokens of the turn.
    UtteranceStart,
    /// First tokens of any sentence inside the turn.
    SentenceStart,
    Anywhere,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelingRule {
    pub category: IntentLabel,
    /// Tokenized patterns.
    pub patterns: Vec<Vec<String>>,
    pub anchor: Anchor,
}

/// Wire form of a rule in a JSON rule file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub category: String,
    pub patterns: Vec<String>,
    pub anchor: Anchor,
}

impl LabelingRule {
    pub fn new<S: AsRef<str>>(category: IntentLabel, patterns: &[S], anchor: Anchor) -> Result<Self> {
        if category == IntentLabel::Abstain {
            return Err(Error::Rule(
                "abstain is the fallback and cannot be a rule target".into(),
            ));
        }
        let patterns: Vec<Vec<String>> = patterns
            .iter()
            .map(|p| tokenize(p.as_ref()))
            .filter(|p| !p.is_empty())
            .collect();
        if patterns.is_empty() {
            return Err(Error::Rule(format!("rule for {category} has no patterns")));
        }
        Ok(LabelingRule {
            category,
            patterns,
            anchor,
        })
    }

    pub fn from_spec(spec: &RuleSpec) -> Result<Self> {
        LabelingRule::new(spec.category.parse()?, &spec.patterns, spec.anchor)
    }

    pub fn to_spec(&self) -> RuleSpec {
        RuleSpec {
            category: self.category.as_str().to_string(),
            patterns: self.patterns.iter().map(|p| p.join(" ")).collect(),
            anchor: self.anchor,
        }
    }

    fn matches(&self, tokens: &[String], sentences: &[SentenceSpan]) -> bool {
        let needs_question = self.category == IntentLabel::Confirm;
        self.patterns.iter().any(|pattern| {
            let starts: Box<dyn Iterator<Item = usize>> = match self.anchor {
                Anchor::UtteranceStart => Box::new(std::iter::once(0)),
                Anchor::SentenceStart => Box::new(sentences.iter().map(|s| s.start)),
                Anchor::Anywhere => Box::new(0..tokens.len()),
            };
            starts
                .filter(|&at| tokens[at.min(tokens.len())..].starts_with(pattern))
                .any(|at| !needs_question || sentences.iter().any(|s| s.start <= at && at < s.end && s.is_question))
        })
    }
}

pub fn default_rules() -> Vec<LabelingRule> {
    let rule =
        |category, patterns: &[&str], anchor| LabelingRule::new(category, patterns, anchor).expect("built-in rule");
    vec![
        rule(IntentLabel::Why, &["why", "why not"], Anchor::Anywhere),
        rule(
            IntentLabel::What,
            &["what's", "what about", "what is"],
            Anchor::Anywhere,
        ),
        rule(IntentLabel::Where, &["where"], Anchor::Anywhere),
        rule(IntentLabel::When, &["when", "what time"], Anchor::Anywhere),
        rule(
            IntentLabel::Confirm,
            &[
                "are you",
                "will you",
                "has he",
                "have you",
                "is he",
                "is she",
                "do you",
                "did you",
                "can you",
                "could you",
                "would you",
                "is it",
                "was it",
            ],
            Anchor::SentenceStart,
        ),
    ]
}

/// Reads a JSON array of `{"category", "patterns", "anchor"}` objects.
pub fn load_rules(path: impl AsRef<Path>) -> Result<Vec<LabelingRule>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let specs: Vec<RuleSpec> = serde_json::from_str(&content)?;
    specs.iter().map(LabelingRule::from_spec).collect()
}

#[derive(Debug, Clone, Copy)]
struct SentenceSpan {
    start: usize,
    end: usize,
    is_question: bool,
}

fn is_terminator(token: &str) -> bool {
    matches!(token, "." | "!" | "?")
}

/// Sentences end after a run of terminator tokens.
fn sentence_spans(tokens: &[String]) -> Vec<SentenceSpan> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < tokens.len() {
        if is_terminator(&tokens[i]) {
            let mut end = i;
            let mut is_question = false;
            while end < tokens.len() && is_terminator(&tokens[end]) {
                is_question |= tokens[end] == "?";
                end += 1;
            }
            spans.push(SentenceSpan {
                start,
                end,
                is_question,
            });
            start = end;
            i = end;
        } else {
            i += 1;
        }
    }
    if start < tokens.len() {
        spans.push(SentenceSpan {
            start,
            end: tokens.len(),
            is_question: false,
        });
    }
    spans
}

/// Labels a token sequence.
pub fn label_tokens(tokens: &[String], rules: &[LabelingRule]) -> IntentLabel {
    let sentences = sentence_spans(tokens);
    let mut ordered: Vec<&LabelingRule> = rules.iter().collect();
    ordered.sort_by_key(|r| r.category.priority());
    ordered
        .into_iter()
        .find(|r| r.matches(tokens, &sentences))
        .map_or(IntentLabel::Abstain, |r| r.category)
}

pub fn label_turn(turn: &Turn, rules: &[LabelingRule]) -> IntentLabel {
    label_tokens(&turn.tokens, rules)
}

/// One label per turn, in turn order.
pub fn label_dialogue(dialogue: &Dialogue, rules: &[LabelingRule]) -> Vec<IntentLabel> {
    dialogue.turns.iter().map(|t| label_turn(t, rules)).collect()
}
