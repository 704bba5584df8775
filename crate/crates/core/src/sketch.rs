//! Summary sketches: per-turn `<index> <intent> <key phrases>` records
//! terminated by the `TL;DR` separator.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;
use crate::error::{Error, Result};
use crate::intent::IntentLabel;
use crate::phrase::Phrase;

/// Separates the sketch from the summary in generator targets and outputs.
pub const TLDR: &str = "TL;DR";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchEntry {
    pub turn_index: usize,
    pub intent: IntentLabel,
    pub phrases: Vec<Phrase>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sketch {
    pub entries: Vec<SketchEntry>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SketchStyle {
    /// `1 what at work 2 abstain TL;DR`
    #[default]
    Plain,
    /// `1 #what at work 2 none TL;DR`
    Hash,
}

impl FromStr for SketchStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(SketchStyle::Plain),
            "hash" => Ok(SketchStyle::Hash),
            other => Err(Error::Invalid(format!("unknown sketch style {other:?}"))),
        }
    }
}

/// Which turns a training target's sketch covers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SketchScope {
    #[default]
    Segment,
    Full,
}

impl FromStr for SketchScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segment" => Ok(SketchScope::Segment),
            "full" => Ok(SketchScope::Full),
            other => Err(Error::Invalid(format!("unknown sketch scope {other:?}"))),
        }
    }
}

impl Sketch {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries for turns `start..=end` (1-based), original indices kept.
    pub fn restrict(&self, start: usize, end: usize) -> Sketch {
        Sketch {
            entries: self
                .entries
                .iter()
                .filter(|e| (start..=end).contains(&e.turn_index))
                .cloned()
                .collect(),
        }
    }

    /// All key-phrase tokens in entry order.
    pub fn phrase_tokens(&self) -> Vec<&str> {
        self.entries
            .iter()
            .flat_map(|e| e.phrases.iter())
            .flat_map(|p| p.tokens.iter().map(String::as_str))
            .collect()
    }

    pub fn serialize(&self) -> Result<String> {
        serialize_sketch(self, SketchStyle::Plain)
    }
}

/// Aligns intents and key phrases with the dialogue turns.
pub fn build_sketch(
    dialogue: &Dialogue,
    intents: &[IntentLabel],
    key_phrases: &BTreeMap<usize, Vec<Phrase>>,
) -> Result<Sketch> {
    if intents.len() != dialogue.len() {
        return Err(Error::LengthMismatch {
            expected: dialogue.len(),
            found: intents.len(),
        });
    }
    if let Some(&bad) = key_phrases.keys().find(|&&k| k == 0 || k > dialogue.len()) {
        return Err(Error::Invalid(format!(
            "key phrases for turn {bad} but dialogue has {} turns",
            dialogue.len()
        )));
    }
    let entries = dialogue
        .turns
        .iter()
        .zip(intents)
        .map(|(turn, &intent)| {
            let mut phrases = key_phrases.get(&turn.index).cloned().unwrap_or_default();
            phrases.sort_by_key(|p| p.span.0);
            SketchEntry {
                turn_index: turn.index,
                intent,
                phrases,
            }
        })
        .collect();
    Ok(Sketch { entries })
}

pub fn serialize_sketch(sketch: &Sketch, style: SketchStyle) -> Result<String> {
    if sketch.is_empty() {
        return Err(Error::Invalid("cannot serialize a sketch with no entries".into()));
    }
    let mut parts: Vec<String> = Vec::new();
    for entry in &sketch.entries {
        parts.push(entry.turn_index.to_string());
        match style {
            SketchStyle::Plain => parts.push(entry.intent.as_str().to_string()),
            SketchStyle::Hash if entry.intent == IntentLabel::Abstain && entry.phrases.is_empty() => {
                parts.push("none".to_string())
            }
            SketchStyle::Hash => parts.push(format!("#{}", entry.intent)),
        }
        parts.extend(entry.phrases.iter().flat_map(|p| p.tokens.iter().cloned()));
    }
    parts.push(TLDR.to_string());
    Ok(parts.join(" "))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedSplit {
    pub sketch_text: String,
    pub summary_text: String,
    /// False when the text had no `TL;DR`; the whole text is then the summary.
    pub marker_found: bool,
}

/// Splits generator output at the first `TL;DR`.
pub fn split_generated(text: &str) -> GeneratedSplit {
    match text.split_once(TLDR) {
        Some((sketch, summary)) => GeneratedSplit {
            sketch_text: sketch.trim().to_string(),
            summary_text: summary.trim().to_string(),
            marker_found: true,
        },
        None => GeneratedSplit {
            sketch_text: String::new(),
            summary_text: text.trim().to_string(),
            marker_found: false,
        },
    }
}

/// A sketch entry recovered from text: index, intent (`None` for the hash
/// style `none` marker) and the phrase words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedEntry {
    pub turn_index: usize,
    pub intent: Option<IntentLabel>,
    pub words: Vec<String>,
}

fn parse_marker(token: &str) -> Option<Option<IntentLabel>> {
    if token == "none" {
        return Some(None);
    }
    token.parse::<IntentLabel>().ok().map(Some)
}

/// Parses sketch text (either style, with or without the trailing `TL;DR`).
/// A new entry starts where the next expected index is followed by an
/// intent marker; everything else is phrase text of the current entry.
pub fn parse_sketch(text: &str) -> Result<Vec<ParsedEntry>> {
    let body = text.split_once(TLDR).map_or(text, |(s, _)| s);
    let tokens: Vec<&str> = body.split_whitespace().collect();
    let mut entries: Vec<ParsedEntry> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let expected = entries.last().map(|e| e.turn_index + 1);
        let starts_entry = tokens[i]
            .parse::<usize>()
            .ok()
            .filter(|&n| expected.is_none_or(|e| e == n))
            .zip(tokens.get(i + 1).and_then(|t| parse_marker(t)));
        match (starts_entry, entries.last_mut()) {
            (Some((turn_index, intent)), _) => {
                entries.push(ParsedEntry {
                    turn_index,
                    intent,
                    words: Vec::new(),
                });
                i += 2;
            }
            (None, Some(current)) => {
                current.words.push(tokens[i].to_string());
                i += 1;
            }
            (None, None) => {
                return Err(Error::Invalid(format!(
                    "sketch text does not start with an entry: {:?}",
                    tokens[i]
                )))
            }
        }
    }
    Ok(entries)
}
