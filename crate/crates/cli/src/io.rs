use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use dialsum::phrase::{parse_bracketed, ParseTree};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| serde_json::from_str(line).with_context(|| format!("{}: line {}", path.display(), i + 1)))
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush().with_context(|| format!("writing {}", path.display()))
}

/// Parse trees for one dialogue, one entry per merged turn; `null` means no
/// tree for that turn.
#[derive(Debug, Deserialize)]
struct TreeRecord {
    id: String,
    trees: Vec<Option<String>>,
}

pub type TreeIndex = HashMap<String, Vec<Option<ParseTree>>>;

pub fn read_trees(path: &Path) -> Result<TreeIndex> {
    let mut index = HashMap::new();
    for record in read_jsonl::<TreeRecord>(path)? {
        let trees = record
            .trees
            .iter()
            .enumerate()
            .map(|(i, t)| {
                t.as_deref()
                    .map(parse_bracketed)
                    .transpose()
                    .with_context(|| format!("{}: dialogue {} turn {}", path.display(), record.id, i + 1))
            })
            .collect::<Result<Vec<_>>>()?;
        if index.insert(record.id.clone(), trees).is_some() {
            bail!("{}: duplicate id {}", path.display(), record.id);
        }
    }
    Ok(index)
}

/// Indexes records by id, rejecting duplicates.
pub fn by_id<T>(path: &Path, items: Vec<T>, id: impl Fn(&T) -> &str) -> Result<HashMap<String, T>> {
    let mut map = HashMap::with_capacity(items.len());
    for item in items {
        let key = id(&item).to_string();
        if map.contains_key(&key) {
            bail!("{}: duplicate id {key}", path.display());
        }
        map.insert(key, item);
    }
    Ok(map)
}
