//! ROUGE-1/2/L and corpus-level evaluation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Dialogue};
use crate::error::{Error, Result};
use crate::phrase::lcs_len;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(matches: usize, candidate_total: usize, reference_total: usize) -> Self {
        if candidate_total == 0 || reference_total == 0 {
            return RougeScore::default();
        }
        let precision = matches as f64 / candidate_total as f64;
        let recall = matches as f64 / reference_total as f64;
        RougeScore {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N with multiset clipping.
///
/// # Panics
///
/// If `n` is zero.
pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> RougeScore {
    assert!(n >= 1, "ROUGE-N needs n >= 1");
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matches: usize = cand
        .iter()
        .map(|(gram, &c)| c.min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    RougeScore::from_counts(
        matches,
        candidate.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

pub fn rouge_l(candidate: &[String], reference: &[String]) -> RougeScore {
    RougeScore::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// Evaluation tokenizer: lowercase, anything outside `[a-z0-9]` becomes a
/// separator, and with `stem` tokens longer than three characters go through
/// the Porter stemmer.
pub fn eval_tokens(text: &str, stem: bool) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit()))
        .filter(|t| !t.is_empty())
        .map(|t| {
            if stem && t.len() > 3 {
                porter_stemmer::stem(t)
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// Summary token count over dialogue token count.
pub fn length_ratio(summary: &str, dialogue: &Dialogue) -> Result<f64> {
    let dialogue_tokens = dialogue.token_count();
    if dialogue_tokens == 0 {
        return Err(Error::EmptyDialogue);
    }
    Ok(tokenize(summary).len() as f64 / dialogue_tokens as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub stem: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { stem: true }
    }
}

/// Per-record scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordScores {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
    pub length_ratio: f64,
}

pub fn score_record(
    prediction: &str,
    reference: &str,
    dialogue: &Dialogue,
    options: EvalOptions,
) -> Result<RecordScores> {
    let cand = eval_tokens(prediction, options.stem);
    let refs = eval_tokens(reference, options.stem);
    Ok(RecordScores {
        rouge1: rouge_n(&cand, &refs, 1),
        rouge2: rouge_n(&cand, &refs, 2),
        rouge_l: rouge_l(&cand, &refs),
        length_ratio: length_ratio(prediction, dialogue)?,
    })
}

/// Corpus means of per-record F1 and length ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub length_ratio: f64,
}

pub fn evaluate_corpus<P: AsRef<str>, R: AsRef<str>>(
    predictions: &[P],
    references: &[R],
    dialogues: &[Dialogue],
    options: EvalOptions,
) -> Result<EvalReport> {
    if predictions.len() != references.len() {
        return Err(Error::LengthMismatch {
            expected: predictions.len(),
            found: references.len(),
        });
    }
    if predictions.len() != dialogues.len() {
        return Err(Error::LengthMismatch {
            expected: predictions.len(),
            found: dialogues.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Invalid("nothing to evaluate".into()));
    }
    let scores = predictions
        .iter()
        .zip(references)
        .zip(dialogues)
        .map(|((p, r), d)| score_record(p.as_ref(), r.as_ref(), d, options))
        .collect::<Result<Vec<_>>>()?;
    let n = scores.len() as f64;
    let mean = |f: fn(&RecordScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
    Ok(EvalReport {
        rouge1: mean(|s| s.rouge1.f1),
        rouge2: mean(|s| s.rouge2.f1),
        rouge_l: mean(|s| s.rouge_l.f1),
        length_ratio: mean(|s| s.length_ratio),
    })
}
