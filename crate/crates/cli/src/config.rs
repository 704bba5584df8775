use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use dialsum::generate::Mode;
use dialsum::segment::SimVariant;
use dialsum::sketch::{SketchScope, SketchStyle};
use serde::Deserialize;

/// Settings file passed with `--config`. Command-line flags win over it.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub corpus: Option<PathBuf>,
    pub trees: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub probs: Option<PathBuf>,
    pub min_lcs: Option<usize>,
    pub cut_threshold: Option<f64>,
    pub mode: Option<String>,
    pub generator: Option<String>,
    pub sketch_scope: Option<String>,
    pub sketch_style: Option<String>,
    pub sim: Option<String>,
    pub stem: Option<bool>,
    pub seed: Option<u64>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub l2: Option<f64>,
    pub max_tokens: Option<usize>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: Config =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config
            .validate()
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for path in [
            &self.corpus,
            &self.trees,
            &self.rules,
            &self.stopwords,
            &self.model,
            &self.probs,
        ]
        .into_iter()
        .flatten()
        {
            if !path.exists() {
                bail!("{} does not exist", path.display());
            }
        }
        if let Some(t) = self.cut_threshold {
            if !(0.0..=1.0).contains(&t) {
                bail!("cut_threshold {t} outside [0, 1]");
            }
        }
        if self.min_lcs == Some(0) {
            bail!("min_lcs must be at least 1");
        }
        if self.max_tokens == Some(0) {
            bail!("max_tokens must be at least 1");
        }
        if let Some(m) = &self.mode {
            Mode::from_str(m)?;
        }
        if let Some(g) = &self.generator {
            GeneratorSpec::from_str(g)?;
        }
        if let Some(s) = &self.sketch_scope {
            SketchScope::from_str(s)?;
        }
        if let Some(s) = &self.sketch_style {
            SketchStyle::from_str(s)?;
        }
        if let Some(s) = &self.sim {
            SimVariant::from_str(s)?;
        }
        let train = dialsum::cutmodel::TrainConfig {
            lr: self.lr.unwrap_or(0.1),
            epochs: self.epochs.unwrap_or(1),
            seed: 0,
            l2: self.l2.unwrap_or(0.0),
        };
        train.validate()?;
        Ok(())
    }
}

/// `longest`, `echo` or `remote:URL`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeneratorSpec {
    Longest,
    Echo,
    Remote(String),
}

impl FromStr for GeneratorSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "longest" => Ok(GeneratorSpec::Longest),
            "echo" => Ok(GeneratorSpec::Echo),
            _ => match s.strip_prefix("remote:") {
                Some(url) if !url.is_empty() => Ok(GeneratorSpec::Remote(url.to_string())),
                _ => bail!("unknown generator {s:?}; use longest, echo or remote:URL"),
            },
        }
    }
}
