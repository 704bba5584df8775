//! Constituent phrases and LCS-based key-phrase extraction.
//!
//! Trees arrive as bracketed S-expressions (`(S (NP the cat) (VP sat))`)
//! produced by an external constituency parser. Every internal node yields a
//! candidate phrase; a candidate is kept when its longest common subsequence
//! with the reference summary is long enough and carries enough content
//! words. Without a tree, all contiguous spans of 2..=6 tokens are
//! candidates.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_punct_token, Turn};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeNode {
    Tree(ParseTree),
    Leaf(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    pub label: String,
    pub children: Vec<TreeNode>,
}

impl ParseTree {
    /// In-order leaf tokens.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        for child in &self.children {
            match child {
                TreeNode::Leaf(token) => out.push(token),
                TreeNode::Tree(tree) => tree.collect_leaves(out),
            }
        }
    }

    pub fn internal_node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|c| match c {
                TreeNode::Tree(t) => t.internal_node_count(),
                TreeNode::Leaf(_) => 0,
            })
            .sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|c| match c {
                TreeNode::Tree(t) => t.depth(),
                TreeNode::Leaf(_) => 0,
            })
            .max()
            .unwrap_or(0)
    }

    /// Leaves lowercased with PTB bracket escapes undone, comparable to
    /// turn tokens.
    pub fn normalized_leaves(&self) -> Vec<String> {
        self.leaves().into_iter().map(normalize_leaf).collect()
    }
}

fn normalize_leaf(leaf: &str) -> String {
    match leaf {
        "-LRB-" | "-lrb-" => "(".to_string(),
        "-RRB-" | "-rrb-" => ")".to_string(),
        "-LSB-" | "-lsb-" => "[".to_string(),
        "-RSB-" | "-rsb-" => "]".to_string(),
        "-LCB-" | "-lcb-" => "{".to_string(),
        "-RCB-" | "-rcb-" => "}".to_string(),
        "``" | "''" => "\"".to_string(),
        other => other.to_lowercase(),
    }
}

struct TreeParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> TreeParser<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn error(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Tree {
            offset,
            message: message.into(),
        }
    }

    fn atom(&mut self) -> &'a str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_whitespace() || c == '(' || c == ')' {
                break;
            }
            self.pos += c.len_utf8();
        }
        &self.src[start..self.pos]
    }

    /// Parses a node whose `(` was consumed at `open`.
    fn node(&mut self, open: usize) -> Result<ParseTree> {
        self.skip_ws();
        let label = match self.peek() {
            None => return Err(self.error(self.pos, "unexpected end of input, expected label")),
            Some(')') => return Err(self.error(open, "empty node")),
            // PTB files wrap sentences in an unlabeled outer bracket.
            Some('(') => String::new(),
            Some(_) => self.atom().to_string(),
        };
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Err(self.error(self.pos, "unbalanced parentheses, expected ')'")),
                Some(')') => {
                    self.pos += 1;
                    break;
                }
                Some('(') => {
                    let at = self.pos;
                    self.pos += 1;
                    children.push(TreeNode::Tree(self.node(at)?));
                }
                Some(_) => children.push(TreeNode::Leaf(self.atom().to_string())),
            }
        }
        if children.is_empty() {
            return Err(self.error(open, format!("node {label:?} has no children")));
        }
        Ok(ParseTree { label, children })
    }
}

/// Parses one bracketed tree. Offsets in errors are byte offsets into `s`.
pub fn parse_bracketed(s: &str) -> Result<ParseTree> {
    let mut parser = TreeParser { src: s, pos: 0 };
    parser.skip_ws();
    match parser.peek() {
        Some('(') => {}
        Some(_) => return Err(parser.error(parser.pos, "expected '('")),
        None => return Err(parser.error(parser.pos, "empty input")),
    }
    let open = parser.pos;
    parser.pos += 1;
    let tree = parser.node(open)?;
    parser.skip_ws();
    if parser.pos != s.len() {
        return Err(parser.error(parser.pos, "trailing input after tree"));
    }
    Ok(tree)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Phrase {
    pub tokens: Vec<String>,
    /// Half-open token offsets `[start, end)` within the turn.
    pub span: (usize, usize),
    /// 1-based turn index.
    pub source_turn: usize,
}

impl Phrase {
    pub fn len(&self) -> usize {
        self.span.1 - self.span.0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn strictly_contains(&self, other: &Phrase) -> bool {
        self.span != other.span && self.span.0 <= other.span.0 && other.span.1 <= self.span.1
    }

    fn overlaps(&self, other: &Phrase) -> bool {
        self.span.0 < other.span.1 && other.span.0 < self.span.1
    }
}

/// One phrase per internal node (its leaf yield), in pre-order.
pub fn enumerate_constituents(tree: &ParseTree, source_turn: usize) -> Vec<Phrase> {
    fn walk(tree: &ParseTree, offset: &mut usize, turn: usize, out: &mut Vec<Phrase>) {
        let slot = out.len();
        let start = *offset;
        out.push(Phrase {
            tokens: Vec::new(),
            span: (start, start),
            source_turn: turn,
        });
        let mut tokens = Vec::new();
        for child in &tree.children {
            match child {
                TreeNode::Leaf(leaf) => {
                    tokens.push(normalize_leaf(leaf));
                    *offset += 1;
                }
                TreeNode::Tree(sub) => {
                    let child_slot = out.len();
                    walk(sub, offset, turn, out);
                    tokens.extend(out[child_slot].tokens.iter().cloned());
                }
            }
        }
        out[slot].tokens = tokens;
        out[slot].span.1 = *offset;
    }

    let mut out = Vec::new();
    walk(tree, &mut 0, source_turn, &mut out);
    out
}

/// Length of a longest common subsequence, in O(min) memory.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0usize; short.len() + 1];
    let mut cur = vec![0usize; short.len() + 1];
    for x in long {
        for (j, y) in short.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// A longest common subsequence of `a` and `b`. Among equally long
/// candidates the walk keeps earlier positions of `a` available, so matches
/// land on the earliest `a` positions.
pub fn lcs<T: PartialEq + Clone>(a: &[T], b: &[T]) -> Vec<T> {
    let (n, m) = (a.len(), b.len());
    // suffix[i][j] = lcs length of a[i..] and b[j..]
    let width = m + 1;
    let mut suffix = vec![0usize; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i * width + j] = if a[i] == b[j] {
                suffix[(i + 1) * width + j + 1] + 1
            } else {
                suffix[(i + 1) * width + j].max(suffix[i * width + j + 1])
            };
        }
    }
    let mut out = Vec::with_capacity(suffix[0]);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] {
            out.push(a[i].clone());
            i += 1;
            j += 1;
        } else if suffix[i * width + j + 1] >= suffix[(i + 1) * width + j] {
            j += 1;
        } else {
            i += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

const BUILTIN_STOPWORDS: &str = "a an the this that these those \
    i me my mine myself you your yours yourself we us our ours he him his she her hers \
    it its they them their theirs 'm 's 're 've 'll 'd i'm it's you're we're they're \
    i've you've we've i'll you'll we'll he's she's that's there's \
    am is are was were be been being have has had do does did will would shall should \
    can could may might must \
    in on at to of for from by with about into onto over under up down out off \
    as than then so and or but if because while though \
    not no yes ok okay oh hey hi just also too very really there here what which who \
    whom whose when where why how all any some";

impl Stopwords {
    pub fn builtin() -> Self {
        Stopwords(BUILTIN_STOPWORDS.split_whitespace().map(str::to_string).collect())
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        Stopwords(
            words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    /// One word per line; blank lines ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Stopwords::from_words(content.lines()))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    /// Neither a stopword nor punctuation.
    pub fn is_content(&self, token: &str) -> bool {
        !self.contains(token) && !is_punct_token(token)
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords::builtin()
    }
}

#[derive(Debug, Clone)]
pub struct KeyPhraseConfig {
    /// Minimum LCS length with the summary.
    pub min_lcs: usize,
    /// Minimum number of content tokens inside that LCS.
    pub min_content: usize,
    pub stopwords: Stopwords,
    /// Span lengths used when no tree is available.
    pub ngram_range: (usize, usize),
}

impl Default for KeyPhraseConfig {
    fn default() -> Self {
        KeyPhraseConfig {
            min_lcs: 2,
            min_content: 1,
            stopwords: Stopwords::builtin(),
            ngram_range: (2, 6),
        }
    }
}

/// Whether the tree's leaves reproduce the turn tokens.
pub fn tree_matches_turn(tree: &ParseTree, turn: &Turn) -> bool {
    tree.normalized_leaves() == turn.tokens
}

/// All contiguous spans with lengths in `range` (inclusive).
pub fn ngram_candidates(turn: &Turn, range: (usize, usize)) -> Vec<Phrase> {
    let n = turn.tokens.len();
    let mut out = Vec::new();
    for start in 0..n {
        for len in range.0.max(1)..=range.1 {
            let end = start + len;
            if end > n {
                break;
            }
            out.push(Phrase {
                tokens: turn.tokens[start..end].to_vec(),
                span: (start, end),
                source_turn: turn.index,
            });
        }
    }
    out
}

struct Scored {
    phrase: Phrase,
    content: usize,
}

/// Key phrases of `turn` with respect to `target` (the summary tokens).
///
/// Candidates come from the tree when it reproduces the turn tokens, and
/// from n-gram spans otherwise. After thresholding, a kept phrase that
/// strictly contains another kept phrase with the same number of matched
/// content tokens is dropped (its extra words add nothing), then phrases
/// nested in a remaining kept phrase are dropped, and overlaps are resolved
/// longest-first, earlier-first.
pub fn extract_key_phrases(
    turn: &Turn,
    tree: Option<&ParseTree>,
    target: &[String],
    config: &KeyPhraseConfig,
) -> Vec<Phrase> {
    if target.is_empty() || turn.tokens.is_empty() {
        return Vec::new();
    }
    let mut candidates = match tree {
        Some(tree) if tree_matches_turn(tree, turn) => enumerate_constituents(tree, turn.index),
        _ => ngram_candidates(turn, config.ngram_range),
    };
    let mut seen = HashSet::new();
    candidates.retain(|p| !p.is_empty() && seen.insert(p.span));

    let kept: Vec<Scored> = candidates
        .into_iter()
        .filter_map(|phrase| {
            let common = lcs(&phrase.tokens, target);
            let content = common.iter().filter(|t| config.stopwords.is_content(t)).count();
            (common.len() >= config.min_lcs && content >= config.min_content).then_some(Scored { phrase, content })
        })
        .collect();

    let tight: Vec<&Scored> = kept
        .iter()
        .filter(|p| {
            !kept
                .iter()
                .any(|q| p.phrase.strictly_contains(&q.phrase) && q.content == p.content)
        })
        .collect();
    let mut maximal: Vec<&Phrase> = tight
        .iter()
        .filter(|p| !tight.iter().any(|q| q.phrase.strictly_contains(&p.phrase)))
        .map(|p| &p.phrase)
        .collect();

    maximal.sort_by(|a, b| b.len().cmp(&a.len()).then(a.span.0.cmp(&b.span.0)));
    let mut chosen: Vec<Phrase> = Vec::new();
    for p in maximal {
        if !chosen.iter().any(|c| c.overlaps(p)) {
            chosen.push(p.clone());
        }
    }
    chosen.sort_by_key(|p| p.span.0);
    chosen
}
