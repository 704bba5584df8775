//! Dialogue corpora: loading, cleaning, turn merging and tokenization.
//!
//! Records are read from JSONL (one object per line) in the canonical
//! schema `{"id", "dialogue": [{"speaker", "text"}], "summary"}`. The
//! SAMSum distribution format, where `dialogue` is a single newline-separated
//! `"Speaker: text"` string, is accepted too, either as JSONL or as a
//! top-level JSON array.
//!
//! Cleaning order per record: clean every raw turn, drop the turns that
//! became empty, then merge adjacent same-speaker turns and renumber.

use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercases and splits on whitespace; punctuation marks become their own
/// tokens unless they sit inside a word (`don't`, `re-send`) or a number
/// (`3.5`, `5:30`).
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c == '\u{2019}' { '\'' } else { c })
        .collect();

    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if is_punct_char(c) && !joins_word(&chars, i) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_string());
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn is_punct_char(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2026}'
                | '\u{201c}'
                | '\u{201d}'
                | '\u{2018}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{ab}'
                | '\u{bb}'
                | '\u{bf}'
                | '\u{a1}'
        )
}

fn joins_word(chars: &[char], i: usize) -> bool {
    let (Some(&prev), Some(&next)) = (i.checked_sub(1).and_then(|p| chars.get(p)), chars.get(i + 1)) else {
        return false;
    };
    match chars[i] {
        '\'' | '-' => prev.is_alphanumeric() && next.is_alphanumeric(),
        '.' | ',' | ':' => prev.is_ascii_digit() && next.is_ascii_digit(),
        _ => false,
    }
}

/// True for tokens made only of punctuation characters.
pub fn is_punct_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(is_punct_char)
}

static HASHTAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#\w+").unwrap());
static URL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").unwrap());

fn is_emoji(c: char) -> bool {
    matches!(c as u32, 0x1F300..=0x1FAFF | 0x2600..=0x27BF | 0xFE0F | 0x200D)
}

/// Collapses whitespace runs to single spaces and trims.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Removes emoji codepoints, hashtags and URLs, then normalizes whitespace.
pub fn clean_text(raw: &str) -> String {
    let mut text = raw.to_string();
    // Removing one pattern can splice a new match together ("www#x.a"), so
    // iterate to a fixpoint.
    loop {
        let no_emoji: String = text.chars().filter(|&c| !is_emoji(c)).collect();
        let no_tags = HASHTAG.replace_all(&no_emoji, "");
        let no_urls = URL.replace_all(&no_tags, " ");
        let next = normalize_whitespace(&no_urls);
        if next == text {
            return next;
        }
        text = next;
    }
}

/// Splits after `.`, `!` or `?` when followed by whitespace or the end of
/// input. Terminators stay attached; empty fragments are dropped.
pub fn split_summary_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let end = i + c.len_utf8();
        if text[end..].chars().next().is_none_or(char::is_whitespace) {
            let fragment = text[start..end].trim();
            if !fragment.is_empty() {
                sentences.push(fragment.to_string());
            }
            start = end;
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        sentences.push(rest.to_string());
    }
    sentences
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    /// 1-based position within the dialogue.
    pub index: usize,
    pub speaker: String,
    pub text: String,
    pub tokens: Vec<String>,
}

impl Turn {
    pub fn new(index: usize, speaker: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Turn {
            index,
            speaker: speaker.into(),
            text,
            tokens,
        }
    }

    /// `"Speaker: text"`.
    pub fn render(&self) -> String {
        format!("{}: {}", self.speaker, self.text)
    }
}

/// Joins runs of adjacent same-speaker turns with a single space and
/// renumbers the result from 1.
pub fn merge_adjacent_turns(turns: &[Turn]) -> Vec<Turn> {
    let mut merged: Vec<(String, String)> = Vec::with_capacity(turns.len());
    for turn in turns {
        match merged.last_mut() {
            Some((speaker, text)) if *speaker == turn.speaker => {
                if text.is_empty() {
                    text.push_str(&turn.text);
                } else if !turn.text.is_empty() {
                    text.push(' ');
                    text.push_str(&turn.text);
                }
            }
            _ => merged.push((turn.speaker.clone(), turn.text.clone())),
        }
    }
    merged
        .into_iter()
        .enumerate()
        .map(|(i, (speaker, text))| Turn::new(i + 1, speaker, text))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Validates that turns are nonempty, indexed 1..N and carry speakers.
    pub fn new(id: impl Into<String>, turns: Vec<Turn>) -> Result<Self> {
        let id = id.into();
        if turns.is_empty() {
            return Err(Error::Invalid(format!("dialogue {id} has no turns")));
        }
        for (i, turn) in turns.iter().enumerate() {
            if turn.index != i + 1 {
                return Err(Error::Invalid(format!(
                    "dialogue {id}: turn at position {} has index {}",
                    i + 1,
                    turn.index
                )));
            }
            if turn.speaker.is_empty() {
                return Err(Error::Invalid(format!(
                    "dialogue {id}: turn {} has no speaker",
                    turn.index
                )));
            }
        }
        Ok(Dialogue { id, turns })
    }

    /// Builds a dialogue from `(speaker, text)` pairs without cleaning or merging.
    pub fn from_pairs<S: AsRef<str>, T: AsRef<str>>(id: impl Into<String>, pairs: &[(S, T)]) -> Result<Self> {
        let turns = pairs
            .iter()
            .enumerate()
            .map(|(i, (s, t))| Turn::new(i + 1, s.as_ref(), t.as_ref()))
            .collect();
        Dialogue::new(id, turns)
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// 1-based access.
    pub fn turn(&self, index: usize) -> Option<&Turn> {
        index.checked_sub(1).and_then(|i| self.turns.get(i))
    }

    pub fn token_count(&self) -> usize {
        self.turns.iter().map(|t| t.tokens.len()).sum()
    }

    /// Concatenated tokens of turns `start..=end` (1-based, inclusive).
    pub fn span_tokens(&self, start: usize, end: usize) -> Vec<String> {
        self.turns[start - 1..end]
            .iter()
            .flat_map(|t| t.tokens.iter().cloned())
            .collect()
    }

    /// One `"Speaker: text"` line per turn.
    pub fn render(&self) -> String {
        self.turns.iter().map(Turn::render).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Sentence { text, tokens }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSummary {
    pub sentences: Vec<Sentence>,
}

impl ReferenceSummary {
    /// Normalizes whitespace and splits into sentences. `None` when nothing
    /// is left.
    pub fn parse(text: &str) -> Option<Self> {
        let sentences: Vec<Sentence> = split_summary_sentences(&normalize_whitespace(text))
            .into_iter()
            .map(Sentence::new)
            .collect();
        (!sentences.is_empty()).then_some(ReferenceSummary { sentences })
    }

    pub fn from_sentences<S: AsRef<str>>(sentences: &[S]) -> Option<Self> {
        let sentences: Vec<Sentence> = sentences.iter().map(|s| Sentence::new(s.as_ref())).collect();
        (!sentences.is_empty()).then_some(ReferenceSummary { sentences })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn text(&self) -> String {
        self.sentences
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn tokens(&self) -> Vec<String> {
        self.sentences.iter().flat_map(|s| s.tokens.iter().cloned()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogueSample {
    pub dialogue: Dialogue,
    pub summary: Option<ReferenceSummary>,
}

impl DialogueSample {
    pub fn id(&self) -> &str {
        &self.dialogue.id
    }

    pub fn to_record(&self) -> CorpusRecord {
        CorpusRecord {
            id: Some(self.dialogue.id.clone()),
            dialogue: RawDialogue::Turns(
                self.dialogue
                    .turns
                    .iter()
                    .map(|t| RawTurn {
                        speaker: t.speaker.clone(),
                        text: t.text.clone(),
                    })
                    .collect(),
            ),
            summary: self.summary.as_ref().map(ReferenceSummary::text),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    /// Inference-only records: any summary present in the file is dropped.
    Infer,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" | "val" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            "infer" => Ok(Split::Infer),
            other => Err(Error::Invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTurn {
    pub speaker: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawDialogue {
    Turns(Vec<RawTurn>),
    /// SAMSum style: newline-separated `"Speaker: text"` lines.
    Text(String),
}

impl RawDialogue {
    pub fn into_turns(self) -> Vec<RawTurn> {
        match self {
            RawDialogue::Turns(turns) => turns,
            RawDialogue::Text(text) => parse_samsum_dialogue(&text),
        }
    }
}

/// One line of a corpus file, before cleaning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub dialogue: RawDialogue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

/// Lines without a `speaker:` prefix continue the previous turn.
pub fn parse_samsum_dialogue(text: &str) -> Vec<RawTurn> {
    let mut turns: Vec<RawTurn> = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        match line.split_once(':') {
            Some((speaker, rest)) if !speaker.trim().is_empty() => turns.push(RawTurn {
                speaker: speaker.trim().to_string(),
                text: rest.trim().to_string(),
            }),
            _ => match turns.last_mut() {
                Some(prev) => {
                    prev.text.push(' ');
                    prev.text.push_str(line);
                }
                None => turns.push(RawTurn {
                    speaker: "unknown".to_string(),
                    text: line.to_string(),
                }),
            },
        }
    }
    turns
}

/// Counters accumulated while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub records: usize,
    /// Records whose dialogue was empty after cleaning.
    pub skipped: usize,
    /// Turns absorbed by same-speaker merging.
    pub merged_turns: usize,
    pub missing_summary: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub samples: Vec<DialogueSample>,
    pub stats: LoadStats,
}

/// Cleans, filters and merges one record. `Ok(None)` when no turn survives
/// cleaning.
pub fn prepare_record(
    record: CorpusRecord,
    line: usize,
    split: Split,
    stats: &mut LoadStats,
) -> Result<Option<DialogueSample>> {
    let id = record.id.unwrap_or_else(|| line.to_string());
    let raw_turns = record.dialogue.into_turns();
    let mut cleaned = Vec::with_capacity(raw_turns.len());
    for raw in raw_turns {
        let speaker = raw.speaker.trim();
        if speaker.is_empty() {
            return Err(Error::Record {
                line,
                message: "turn with empty speaker".to_string(),
            });
        }
        let text = clean_text(&raw.text);
        if !text.is_empty() {
            cleaned.push(Turn::new(cleaned.len() + 1, speaker, text));
        }
    }
    if cleaned.is_empty() {
        log::warn!("line {line}: dialogue {id} is empty after cleaning, skipped");
        stats.skipped += 1;
        return Ok(None);
    }
    let turns = merge_adjacent_turns(&cleaned);
    stats.merged_turns += cleaned.len() - turns.len();

    let summary = match split {
        Split::Infer => None,
        _ => record.summary.as_deref().and_then(ReferenceSummary::parse),
    };
    if summary.is_none() && split != Split::Infer {
        stats.missing_summary += 1;
    }
    let dialogue = Dialogue::new(id, turns)?;
    Ok(Some(DialogueSample { dialogue, summary }))
}

/// Reads raw records with their 1-based line (or array element) numbers.
pub fn read_records(path: &Path) -> Result<Vec<(usize, CorpusRecord)>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if content.trim_start().starts_with('[') {
        let values: Vec<serde_json::Value> = serde_json::from_str(&content).map_err(|e| Error::Record {
            line: e.line(),
            message: e.to_string(),
        })?;
        return values
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                serde_json::from_value(v)
                    .map(|r| (i + 1, r))
                    .map_err(|e| record_error(i + 1, e))
            })
            .collect();
    }
    content
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            parse_record_line(line)
                .map(|r| (i + 1, r))
                .map_err(|e| record_error(i + 1, e))
        })
        .collect()
}

fn parse_record_line(line: &str) -> serde_json::Result<CorpusRecord> {
    let value: serde_json::Value = serde_json::from_str(line)?;
    if value.get("dialogue").is_none() {
        return Err(serde::de::Error::missing_field("dialogue"));
    }
    serde_json::from_value(value)
}

fn record_error(line: usize, e: serde_json::Error) -> Error {
    Error::Record {
        line,
        message: e.to_string(),
    }
}

/// Loads and preprocesses a corpus file, preserving record order.
pub fn load_corpus(path: impl AsRef<Path>, split: Split) -> Result<LoadedCorpus> {
    let mut stats = LoadStats::default();
    let mut samples = Vec::new();
    for (line, record) in read_records(path.as_ref())? {
        stats.records += 1;
        if let Some(sample) = prepare_record(record, line, split, &mut stats)? {
            samples.push(sample);
        }
    }
    Ok(LoadedCorpus { samples, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn turns(pairs: &[(&str, &str)]) -> Vec<Turn> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, (s, t))| Turn::new(i + 1, *s, *t))
            .collect()
    }

    #[test]
    fn tokenize_separates_punctuation() {
        assert_eq!(
            tokenize("Hey gorgeous, what's up?"),
            ["hey", "gorgeous", ",", "what's", "up", "?"]
        );
        assert_eq!(tokenize("re-send it at 5:30."), ["re-send", "it", "at", "5:30", "."]);
        assert_eq!(tokenize("It\u{2019}s 'fine'"), ["it's", "'", "fine", "'"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn clean_text_examples() {
        assert_eq!(clean_text("see http://x.co #fun \u{1F600} ok"), "see ok");
        assert_eq!(clean_text("hello"), "hello");
        assert_eq!(clean_text("www.a.b and #x#y"), "and");
        assert_eq!(clean_text("  spaced \t out\n"), "spaced out");
        assert_eq!(
            clean_text("sun \u{2600}\u{FE0F} fam\u{1F468}\u{200D}\u{1F469}"),
            "sun fam"
        );
    }

    #[test]
    fn clean_text_reaches_fixpoint_on_spliced_patterns() {
        let once = clean_text("www#x.a rest");
        assert_eq!(once, "rest");
        assert_eq!(clean_text(&once), once);
    }

    #[test]
    fn merge_examples() {
        let merged = merge_adjacent_turns(&turns(&[("A", "hi"), ("A", "there"), ("B", "yo")]));
        assert_eq!(merged, turns(&[("A", "hi there"), ("B", "yo")]));

        let unchanged = turns(&[("A", "x"), ("B", "y")]);
        assert_eq!(merge_adjacent_turns(&unchanged), unchanged);

        let triple = merge_adjacent_turns(&turns(&[("A", "a"), ("A", "b"), ("A", "c")]));
        assert_eq!(triple, turns(&[("A", "a b c")]));
    }

    #[test]
    fn split_sentences_examples() {
        assert_eq!(
            split_summary_sentences("A is late. B will order."),
            ["A is late.", "B will order."]
        );
        assert_eq!(split_summary_sentences("One sentence"), ["One sentence"]);
        assert_eq!(split_summary_sentences("Hi! Ok? Yes.").len(), 3);
        assert!(split_summary_sentences("").is_empty());
        assert_eq!(
            split_summary_sentences("Costs 3.5 euro. Ok!!"),
            ["Costs 3.5 euro.", "Ok!!"]
        );
    }

    #[test]
    fn samsum_string_dialogue() {
        let turns = parse_samsum_dialogue("Amanda: I baked cookies.\r\nJerry: Sure!\nand more\n");
        assert_eq!(turns.len(), 2);
        assert_eq!(turns[1].text, "Sure! and more");
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_two_lines() {
        let f = write_tmp(concat!(
            r##"{"id":"a","dialogue":[{"speaker":"A","text":"hi"},{"speaker":"A","text":"#tag there"},{"speaker":"B","text":"yo"}],"summary":"A greets B. B replies."}"##,
            "\n",
            r#"{"id":"b","dialogue":"Kelly: OK\nJohn: fine","summary":"Fine."}"#,
            "\n"
        ));
        let corpus = load_corpus(f.path(), Split::Test).unwrap();
        assert_eq!(corpus.samples.len(), 2);
        assert_eq!(corpus.samples[0].dialogue.turns[0].text, "hi there");
        assert_eq!(corpus.stats.merged_turns, 1);
        assert_eq!(corpus.samples[0].summary.as_ref().unwrap().len(), 2);
        assert_eq!(corpus.samples[1].dialogue.turns[1].speaker, "John");
    }

    #[test]
    fn missing_dialogue_field_names_line() {
        let f = write_tmp(concat!(
            r#"{"id":"a","dialogue":[{"speaker":"A","text":"hi"}]}"#,
            "\n",
            r#"{"id":"b","summary":"x"}"#,
            "\n"
        ));
        match load_corpus(f.path(), Split::Train) {
            Err(Error::Record { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("dialogue"), "{message}");
            }
            other => panic!("expected record error, got {other:?}"),
        }
    }

    #[test]
    fn empty_after_cleaning_is_skipped() {
        let f = write_tmp(concat!(
            r##"{"id":"a","dialogue":[{"speaker":"A","text":"#only http://x.y"}],"summary":"x."}"##,
            "\n",
            r#"{"id":"b","dialogue":[{"speaker":"A","text":"kept"}]}"#,
            "\n"
        ));
        let corpus = load_corpus(f.path(), Split::Dev).unwrap();
        assert_eq!(corpus.samples.len(), 1);
        assert_eq!(corpus.stats.skipped, 1);
        assert_eq!(corpus.stats.missing_summary, 1);
    }

    #[test]
    fn json_array_input_and_infer_split() {
        let f = write_tmp(r#"[{"id":"1","dialogue":"A: x\nB: y","summary":"S."}]"#);
        let corpus = load_corpus(f.path(), Split::Infer).unwrap();
        assert!(corpus.samples[0].summary.is_none());
        assert_eq!(corpus.stats.missing_summary, 0);
    }

    #[test]
    fn malformed_json_line() {
        let f = write_tmp(concat!(r#"{"id":"a","dialogue":"A: x"}"#, "\n", "{not json\n"));
        assert!(matches!(
            load_corpus(f.path(), Split::Test),
            Err(Error::Record { line: 2, .. })
        ));
    }

    fn speaker_text() -> impl Strategy<Value = Vec<(String, String)>> {
        prop::collection::vec(("[AB]", "[a-z#:/. \u{1F600}]{0,12}"), 1..8)
    }

    proptest! {
        #[test]
        fn clean_text_is_idempotent(raw in "[a-zw#:/. \u{1F600}\u{2600}htps]{0,30}") {
            let once = clean_text(&raw);
            prop_assert_eq!(clean_text(&once), once);
        }

        #[test]
        fn merge_is_idempotent(pairs in speaker_text()) {
            let ts: Vec<Turn> = pairs
                .iter()
                .enumerate()
                .map(|(i, (s, t))| Turn::new(i + 1, s.clone(), clean_text(t)))
                .collect();
            let once = merge_adjacent_turns(&ts);
            prop_assert!(once.len() <= ts.len());
            prop_assert_eq!(merge_adjacent_turns(&once), once.clone());
            for w in once.windows(2) {
                prop_assert_ne!(&w[0].speaker, &w[1].speaker);
            }
        }

        #[test]
        fn summary_sentences_round_trip(text in "[a-z .!?\n]{0,40}") {
            if let Some(summary) = ReferenceSummary::parse(&text) {
                prop_assert_eq!(summary.text(), normalize_whitespace(&text));
            } else {
                prop_assert!(normalize_whitespace(&text).is_empty());
            }
        }

        #[test]
        fn tokens_rederive_from_text(text in "\\PC{0,30}") {
            let turn = Turn::new(1, "A", text.clone());
            prop_assert_eq!(turn.tokens, tokenize(&text));
        }
    }
}
