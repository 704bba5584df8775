//! Dialogue segmentation: aligning summary sentences to contiguous turn
//! ranges, picking cut points from per-turn probabilities, and marking a
//! segment with highlight tokens.
//!
//! A [`Segmentation`] over `N` turns with cuts `t_1 < ... < t_{M-1}` has
//! segments `[1, t_1], [t_1 + 1, t_2], ..., [t_{M-1} + 1, N]`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, ReferenceSummary};
use crate::error::{Error, Result};
use crate::metrics::rouge_n;

pub const HIGHLIGHT: &str = "<hl>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    cuts: Vec<usize>,
    n_turns: usize,
}

impl Segmentation {
    /// Cuts must be strictly increasing and within `[1, n_turns - 1]`.
    pub fn new(cuts: Vec<usize>, n_turns: usize) -> Result<Self> {
        if n_turns == 0 {
            return Err(Error::Segmentation("dialogue has no turns".into()));
        }
        if let Some(&bad) = cuts.iter().find(|&&c| c == 0 || c >= n_turns) {
            return Err(Error::Segmentation(format!("cut {bad} outside [1, {}]", n_turns - 1)));
        }
        if cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Segmentation(format!(
                "cuts {cuts:?} are not strictly increasing"
            )));
        }
        Ok(Segmentation { cuts, n_turns })
    }

    /// The whole dialogue as one segment.
    pub fn single(n_turns: usize) -> Result<Self> {
        Segmentation::new(Vec::new(), n_turns)
    }

    pub fn cuts(&self) -> &[usize] {
        &self.cuts
    }

    pub fn n_turns(&self) -> usize {
        self.n_turns
    }

    pub fn n_segments(&self) -> usize {
        self.cuts.len() + 1
    }

    /// Inclusive 1-based `(start, end)` turn ranges.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_segments());
        let mut start = 1;
        for &cut in &self.cuts {
            out.push((start, cut));
            start = cut + 1;
        }
        out.push((start, self.n_turns));
        out
    }

    /// Per-turn 0/1 cut labels for positions `1..=N`.
    pub fn labels(&self) -> Vec<bool> {
        let mut labels = vec![false; self.n_turns];
        for &c in &self.cuts {
            labels[c - 1] = true;
        }
        labels
    }
}

/// Which ROUGE-1 quantity serves as the similarity in alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimVariant {
    #[default]
    F1,
    Recall,
    Precision,
}

impl SimVariant {
    /// Unstemmed ROUGE-1 of the dialogue span against the sentence.
    pub fn score(self, span: &[String], sentence: &[String]) -> f64 {
        let s = rouge_n(span, sentence, 1);
        match self {
            SimVariant::F1 => s.f1,
            SimVariant::Recall => s.recall,
            SimVariant::Precision => s.precision,
        }
    }
}

impl FromStr for SimVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(SimVariant::F1),
            "recall" => Ok(SimVariant::Recall),
            "precision" => Ok(SimVariant::Precision),
            other => Err(Error::Invalid(format!("unknown similarity variant {other:?}"))),
        }
    }
}

pub fn align_segments(dialogue: &Dialogue, summary: &ReferenceSummary, sim: SimVariant) -> Result<Segmentation> {
    let sentences: Vec<&[String]> = summary.sentences.iter().map(|s| &s.tokens[..]).collect();
    align_segments_with(dialogue, &sentences, |span, sentence| sim.score(span, sentence))
}

/// Greedy linear alignment. For each sentence but the last, the cut is the
/// end turn `t` of the span starting at the current turn that scores highest
/// against the sentence (smallest `t` on ties), capped so that every later
/// sentence still gets at least one turn.
pub fn align_segments_with<F>(dialogue: &Dialogue, sentences: &[&[String]], sim: F) -> Result<Segmentation>
where
    F: Fn(&[String], &[String]) -> f64,
{
    let n = dialogue.len();
    let m = sentences.len();
    if m == 0 {
        return Err(Error::Invalid("summary has no sentences".into()));
    }
    if m > n {
        return Err(Error::TooManySentences { sentences: m, turns: n });
    }
    let mut cuts = Vec::with_capacity(m - 1);
    let mut start = 1;
    for (k, sentence) in sentences[..m - 1].iter().enumerate() {
        let last_end = n - (m - (k + 1));
        let mut span: Vec<String> = Vec::new();
        let mut best = (start, f64::NEG_INFINITY);
        for end in start..=last_end {
            span.extend(dialogue.turns[end - 1].tokens.iter().cloned());
            let score = sim(&span, sentence);
            if score > best.1 {
                best = (end, score);
            }
        }
        cuts.push(best.0);
        start = best.0 + 1;
    }
    Segmentation::new(cuts, n)
}

/// `i` (1-based, `i < N`) is a cut iff `probs[i - 1] > threshold`.
pub fn cuts_from_probs(probs: &[f64], threshold: f64) -> Result<Segmentation> {
    let n = probs.len();
    let cuts = probs
        .iter()
        .take(n.saturating_sub(1))
        .enumerate()
        .filter(|(_, &p)| p > threshold)
        .map(|(i, _)| i + 1)
        .collect();
    Segmentation::new(cuts, n)
}

/// The `k - 1` positions in `[1, N - 1]` with the highest probability
/// (smaller index on ties), giving exactly `k` segments.
pub fn select_cuts_topk(probs: &[f64], k: usize) -> Result<Segmentation> {
    let n = probs.len();
    if k == 0 || k > n {
        return Err(Error::SegmentCount { k, n_turns: n });
    }
    let mut positions: Vec<usize> = (1..n).collect();
    positions.sort_by(|&a, &b| probs[b - 1].total_cmp(&probs[a - 1]).then(a.cmp(&b)));
    let mut cuts: Vec<usize> = positions.into_iter().take(k - 1).collect();
    cuts.sort_unstable();
    Segmentation::new(cuts, n)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HighlightedDialogue {
    pub text: String,
    /// Inclusive 1-based turn range inside the highlight pair.
    pub segment: (usize, usize),
}

/// Renders the dialogue with `<hl> ` before turn `start`'s line and ` <hl>`
/// after turn `end`'s line.
pub fn insert_highlights(dialogue: &Dialogue, start: usize, end: usize) -> Result<HighlightedDialogue> {
    let n = dialogue.len();
    if start == 0 || start > end || end > n {
        return Err(Error::SegmentBounds { start, end, n_turns: n });
    }
    if dialogue.turns.iter().any(|t| t.render().contains(HIGHLIGHT)) {
        return Err(Error::Invalid(format!(
            "dialogue {} already contains {HIGHLIGHT}",
            dialogue.id
        )));
    }
    let lines: Vec<String> = dialogue
        .turns
        .iter()
        .map(|turn| {
            let mut line = turn.render();
            if turn.index == start {
                line = format!("{HIGHLIGHT} {line}");
            }
            if turn.index == end {
                line = format!("{line} {HIGHLIGHT}");
            }
            line
        })
        .collect();
    Ok(HighlightedDialogue {
        text: lines.join("\n"),
        segment: (start, end),
    })
}

/// Inverse of [`insert_highlights`].
pub fn strip_highlights(text: &str) -> String {
    text.replacen(&format!("{HIGHLIGHT} "), "", 1)
        .replacen(&format!(" {HIGHLIGHT}"), "", 1)
}

/// Pseudo-label line: `{"id", "cuts", "n_turns"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutRecord {
    pub id: String,
    pub cuts: Vec<usize>,
    pub n_turns: usize,
}

impl CutRecord {
    pub fn new(id: impl Into<String>, segmentation: &Segmentation) -> Self {
        CutRecord {
            id: id.into(),
            cuts: segmentation.cuts().to_vec(),
            n_turns: segmentation.n_turns(),
        }
    }

    pub fn segmentation(&self) -> Result<Segmentation> {
        Segmentation::new(self.cuts.clone(), self.n_turns)
    }
}
