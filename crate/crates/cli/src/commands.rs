use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context as _, Result};
use dialsum::corpus::{load_corpus, Dialogue, DialogueSample, LoadedCorpus, Split};
use dialsum::cutmodel::{train, CutClassifier, CutSample, ProbRecord, TrainConfig};
use dialsum::generate::{
    emit_training_pairs, longest_k_baseline, segment_dialogue, summarize as run_summarize, CutSource, Generator, Mode,
    PredictionRecord, RemoteGenerator, SketchEchoGenerator, SummarizeOptions,
};
use dialsum::intent::{default_rules, label_dialogue, load_rules, IntentLabel, LabelingRule};
use dialsum::metrics::{evaluate_corpus, EvalOptions};
use dialsum::phrase::{extract_key_phrases, KeyPhraseConfig, Phrase, Stopwords};
use dialsum::segment::{align_segments, CutRecord, Segmentation, SimVariant};
use dialsum::sketch::{build_sketch, serialize_sketch, Sketch, SketchScope, SketchStyle};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, GeneratorSpec};
use crate::io::{by_id, read_jsonl, read_trees, write_jsonl, TreeIndex};
use crate::PhraseArgs;

pub struct Context {
    pub config: Config,
    pub seed: Option<u64>,
    pub quiet: bool,
}

impl Context {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

fn load(path: &Path, split: Split) -> Result<LoadedCorpus> {
    load_corpus(path, split).with_context(|| format!("loading {}", path.display()))
}

/// Intent rules, key-phrase settings and optional parse trees.
struct Annotator {
    rules: Vec<LabelingRule>,
    phrase_config: KeyPhraseConfig,
    trees: Option<TreeIndex>,
    style: SketchStyle,
}

impl Annotator {
    fn new(ctx: &Context, args: &PhraseArgs) -> Result<Self> {
        let cfg = &ctx.config;
        let rules = match args.rules.as_ref().or(cfg.rules.as_ref()) {
            Some(path) => load_rules(path).with_context(|| format!("loading rules {}", path.display()))?,
            None => default_rules(),
        };
        let mut phrase_config = KeyPhraseConfig::default();
        if let Some(path) = args.stopwords.as_ref().or(cfg.stopwords.as_ref()) {
            phrase_config.stopwords = Stopwords::load(path)?;
        }
        if let Some(min) = args.min_lcs.or(cfg.min_lcs) {
            if min == 0 {
                bail!("--min-lcs must be at least 1");
            }
            phrase_config.min_lcs = min;
        }
        let trees = args
            .trees
            .as_ref()
            .or(cfg.trees.as_ref())
            .map(|p| read_trees(p))
            .transpose()?;
        let style = args
            .sketch_style
            .as_ref()
            .or(cfg.sketch_style.as_ref())
            .map(|s| SketchStyle::from_str(s))
            .transpose()?
            .unwrap_or_default();
        Ok(Annotator {
            rules,
            phrase_config,
            trees,
            style,
        })
    }

    fn intents(&self, dialogue: &Dialogue) -> Vec<IntentLabel> {
        label_dialogue(dialogue, &self.rules)
    }

    /// Sketch with key phrases; `None` without a reference summary.
    fn sketch(&self, sample: &DialogueSample) -> Result<Option<Sketch>> {
        let Some(summary) = &sample.summary else {
            return Ok(None);
        };
        let dialogue = &sample.dialogue;
        let target = summary.tokens();
        let trees = self.trees.as_ref().and_then(|t| t.get(dialogue.id.as_str()));
        let trees = match trees {
            Some(t) if t.len() != dialogue.len() => {
                warn!(
                    "{}: {} trees for {} turns, using n-grams",
                    dialogue.id,
                    t.len(),
                    dialogue.len()
                );
                None
            }
            other => other,
        };
        let phrases: BTreeMap<usize, Vec<Phrase>> = dialogue
            .turns
            .iter()
            .map(|turn| {
                let tree = trees.and_then(|t| t[turn.index - 1].as_ref());
                (
                    turn.index,
                    extract_key_phrases(turn, tree, &target, &self.phrase_config),
                )
            })
            .filter(|(_, p)| !p.is_empty())
            .collect();
        Ok(Some(build_sketch(dialogue, &self.intents(dialogue), &phrases)?))
    }

    /// Intents only, for dialogues without a reference.
    fn bare_sketch(&self, dialogue: &Dialogue) -> Result<Sketch> {
        Ok(build_sketch(dialogue, &self.intents(dialogue), &BTreeMap::new())?)
    }
}

pub fn preprocess(ctx: &Context, input: &Path, output: &Path, split: &str) -> Result<()> {
    let split = Split::from_str(split)?;
    let corpus = load(input, split)?;
    let records: Vec<_> = corpus.samples.iter().map(DialogueSample::to_record).collect();
    write_jsonl(output, &records)?;
    let s = corpus.stats;
    ctx.say(format!(
        "records {}, written {}, skipped {}, merged turns {}, missing summaries {}",
        s.records,
        records.len(),
        s.skipped,
        s.merged_turns,
        s.missing_summary
    ));
    Ok(())
}

#[derive(Serialize)]
struct SketchRecord<'a> {
    id: &'a str,
    sketch: String,
}

pub fn sketch(ctx: &Context, input: &Path, output: &Path, args: &PhraseArgs) -> Result<()> {
    let annotator = Annotator::new(ctx, args)?;
    let corpus = load(input, Split::Train)?;
    let results: Vec<Result<Option<SketchRecord>>> = corpus
        .samples
        .par_iter()
        .map(|sample| {
            let Some(sketch) = annotator.sketch(sample)? else {
                warn!("{}: no reference summary, skipped", sample.id());
                return Ok(None);
            };
            Ok(Some(SketchRecord {
                id: sample.id(),
                sketch: serialize_sketch(&sketch, annotator.style)?,
            }))
        })
        .collect();
    let records: Vec<SketchRecord> = results
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    write_jsonl(output, &records)?;
    ctx.say(format!(
        "sketches {}, skipped {}",
        records.len(),
        corpus.samples.len() - records.len()
    ));
    Ok(())
}

pub fn segment(ctx: &Context, input: &Path, output: &Path, sim: Option<String>) -> Result<()> {
    let sim = sim
        .or(ctx.config.sim.clone())
        .map(|s| SimVariant::from_str(&s))
        .transpose()?
        .unwrap_or_default();
    let corpus = load(input, Split::Train)?;
    let records: Vec<Option<CutRecord>> = corpus
        .samples
        .par_iter()
        .map(|sample| {
            let Some(summary) = &sample.summary else {
                warn!("{}: no reference summary, skipped", sample.id());
                return None;
            };
            match align_segments(&sample.dialogue, summary, sim) {
                Ok(seg) => Some(CutRecord::new(sample.id(), &seg)),
                Err(e) => {
                    warn!("{}: {e}, skipped", sample.id());
                    None
                }
            }
        })
        .collect();
    let records: Vec<CutRecord> = records.into_iter().flatten().collect();
    write_jsonl(output, &records)?;
    ctx.say(format!(
        "labels {}, skipped {}",
        records.len(),
        corpus.samples.len() - records.len()
    ));
    Ok(())
}

fn read_labels(path: &Path) -> Result<HashMap<String, CutRecord>> {
    by_id(path, read_jsonl(path)?, |r: &CutRecord| &r.id)
}

pub fn train_cutter(
    ctx: &Context,
    input: &Path,
    labels: &Path,
    model_out: &Path,
    (lr, epochs, l2): (Option<f64>, Option<usize>, Option<f64>),
    args: &PhraseArgs,
) -> Result<()> {
    let cfg = &ctx.config;
    let defaults = TrainConfig::default();
    let train_cfg = TrainConfig {
        lr: lr.or(cfg.lr).unwrap_or(defaults.lr),
        epochs: epochs.or(cfg.epochs).unwrap_or(defaults.epochs),
        l2: l2.or(cfg.l2).unwrap_or(defaults.l2),
        seed: ctx.seed.or(cfg.seed).unwrap_or(defaults.seed),
    };
    train_cfg.validate()?;
    let annotator = Annotator::new(ctx, args)?;
    let corpus = load(input, Split::Infer)?;
    let labels = read_labels(labels)?;
    let mut samples = Vec::new();
    for sample in corpus.samples {
        let Some(record) = labels.get(sample.id()) else {
            warn!("{}: no cut labels, skipped", sample.id());
            continue;
        };
        let cuts = record
            .segmentation()
            .with_context(|| format!("labels for {}", record.id))?;
        if cuts.n_turns() != sample.dialogue.len() {
            bail!(
                "labels for {} cover {} turns, dialogue has {}",
                record.id,
                cuts.n_turns(),
                sample.dialogue.len()
            );
        }
        samples.push(CutSample {
            intents: annotator.intents(&sample.dialogue),
            cuts,
            dialogue: sample.dialogue,
        });
    }
    let (model, report) = train(&samples, &train_cfg)?;
    model.save(model_out)?;
    info!(
        "trained on {} positions from {} dialogues",
        report.examples,
        samples.len()
    );
    ctx.say(format!(
        "loss {:.6} -> {:.6} over {} epochs; model written to {}",
        report.initial_loss,
        report.final_loss,
        train_cfg.epochs,
        model_out.display()
    ));
    Ok(())
}

pub fn predict_cuts(ctx: &Context, input: &Path, model: &Path, output: &Path, args: &PhraseArgs) -> Result<()> {
    let annotator = Annotator::new(ctx, args)?;
    let model = CutClassifier::load(model).with_context(|| format!("loading model {}", model.display()))?;
    let corpus = load(input, Split::Infer)?;
    let records = corpus
        .samples
        .par_iter()
        .map(|s| {
            let probs = model.predict_probs(&s.dialogue, &annotator.intents(&s.dialogue))?;
            Ok(ProbRecord {
                id: s.id().to_string(),
                probs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(output, &records)?;
    ctx.say(format!("probabilities for {} dialogues", records.len()));
    Ok(())
}

pub fn emit_training(
    ctx: &Context,
    input: &Path,
    output: &Path,
    labels: Option<&Path>,
    scope: Option<String>,
    args: &PhraseArgs,
) -> Result<()> {
    let scope = scope
        .or(ctx.config.sketch_scope.clone())
        .map(|s| SketchScope::from_str(&s))
        .transpose()?
        .unwrap_or_default();
    let sim = ctx
        .config
        .sim
        .as_deref()
        .map(SimVariant::from_str)
        .transpose()?
        .unwrap_or_default();
    let annotator = Annotator::new(ctx, args)?;
    let labels = labels.map(read_labels).transpose()?;
    let corpus = load(input, Split::Train)?;
    let results: Vec<Result<Vec<_>>> = corpus
        .samples
        .par_iter()
        .map(|sample| {
            let (Some(summary), Some(sketch)) = (&sample.summary, annotator.sketch(sample)?) else {
                warn!("{}: no reference summary, skipped", sample.id());
                return Ok(Vec::new());
            };
            let segmentation: Segmentation = match &labels {
                Some(map) => match map.get(sample.id()) {
                    Some(record) => record.segmentation()?,
                    None => {
                        warn!("{}: no cut labels, skipped", sample.id());
                        return Ok(Vec::new());
                    }
                },
                None => match align_segments(&sample.dialogue, summary, sim) {
                    Ok(seg) => seg,
                    Err(e) => {
                        warn!("{}: {e}, skipped", sample.id());
                        return Ok(Vec::new());
                    }
                },
            };
            emit_training_pairs(sample, &segmentation, &sketch, scope)
                .with_context(|| format!("dialogue {}", sample.id()))
        })
        .collect();
    let pairs: Vec<_> = results
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    write_jsonl(output, &pairs)?;
    ctx.say(format!("training pairs {}", pairs.len()));
    Ok(())
}

pub struct SummarizeArgs {
    pub mode: Option<String>,
    pub generator: Option<String>,
    pub probs: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub max_tokens: Option<usize>,
}

enum Cuts {
    None,
    Model(CutClassifier),
    Probs(HashMap<String, ProbRecord>),
}

enum Backend {
    Longest,
    Neural(Box<dyn Generator>),
}

pub fn summarize(ctx: &Context, input: &Path, output: &Path, args: SummarizeArgs, phrases: &PhraseArgs) -> Result<()> {
    let cfg = &ctx.config;
    let mode = match args.mode.as_ref().or(cfg.mode.as_ref()) {
        Some(m) => Mode::from_str(m)?,
        None => Mode::Auto,
    };
    let generator = match args.generator.as_ref().or(cfg.generator.as_ref()) {
        Some(g) => GeneratorSpec::from_str(g)?,
        None => GeneratorSpec::Echo,
    };
    let defaults = SummarizeOptions::default();
    let options = SummarizeOptions {
        threshold: args.threshold.or(cfg.cut_threshold).unwrap_or(defaults.threshold),
        max_tokens: args.max_tokens.or(cfg.max_tokens).unwrap_or(defaults.max_tokens),
    };
    if !(0.0..=1.0).contains(&options.threshold) {
        bail!("--threshold {} outside [0, 1]", options.threshold);
    }
    let cuts = match (args.probs.or(cfg.probs.clone()), args.model.or(cfg.model.clone())) {
        (Some(path), _) => Cuts::Probs(by_id(&path, read_jsonl(&path)?, |r: &ProbRecord| &r.id)?),
        (None, Some(path)) => {
            Cuts::Model(CutClassifier::load(&path).with_context(|| format!("loading model {}", path.display()))?)
        }
        (None, None) if mode == Mode::One => Cuts::None,
        (None, None) => bail!("mode {mode} needs --model or --probs"),
    };
    let backend = match generator {
        GeneratorSpec::Longest => Backend::Longest,
        GeneratorSpec::Echo => Backend::Neural(Box::new(SketchEchoGenerator)),
        GeneratorSpec::Remote(url) => Backend::Neural(Box::new(RemoteGenerator::new(url)?)),
    };
    let annotator = Annotator::new(ctx, phrases)?;
    let corpus = load(input, Split::Infer)?;

    let records = corpus
        .samples
        .par_iter()
        .map(|sample| {
            let d = &sample.dialogue;
            let mode = match mode {
                Mode::Fixed(k) if k > d.len() => {
                    warn!("{}: k={k} exceeds {} turns, using k={}", d.id, d.len(), d.len());
                    Mode::Fixed(d.len())
                }
                m => m,
            };
            let source = match &cuts {
                Cuts::None => CutSource::Probs(&[]),
                Cuts::Model(m) => CutSource::Model(m),
                Cuts::Probs(map) => {
                    let record = map
                        .get(d.id.as_str())
                        .ok_or_else(|| anyhow!("no probabilities for {}", d.id))?;
                    record.validate(d.len())?;
                    CutSource::Probs(&record.probs)
                }
            };
            let sketch = annotator.bare_sketch(d)?;
            let (summary, segmentation) = match &backend {
                Backend::Longest => {
                    let intents: Vec<IntentLabel> = sketch.entries.iter().map(|e| e.intent).collect();
                    let seg = segment_dialogue(d, &intents, mode, source, options.threshold)?;
                    (longest_k_baseline(d, seg.n_segments())?, seg)
                }
                Backend::Neural(generator) => {
                    let out = run_summarize(d, &sketch, mode, generator.as_ref(), source, &options)?;
                    (out.summary, out.segmentation)
                }
            };
            Ok(PredictionRecord {
                id: d.id.clone(),
                summary,
                cuts: segmentation.cuts().to_vec(),
                mode: mode.to_string(),
            })
        })
        .collect::<Vec<Result<PredictionRecord>>>();
    let records = records
        .into_iter()
        .zip(&corpus.samples)
        .map(|(r, s)| r.with_context(|| format!("dialogue {}", s.id())))
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(output, &records)?;
    ctx.say(format!("summaries {}", records.len()));
    Ok(())
}

pub fn evaluate(
    ctx: &Context,
    pred: &Path,
    reference: &Path,
    corpus: Option<&Path>,
    stem: Option<bool>,
    report_path: Option<&Path>,
) -> Result<()> {
    let stem = stem.or(ctx.config.stem).unwrap_or(true);
    let predictions: Vec<PredictionRecord> = read_jsonl(pred)?;
    let references = load(reference, Split::Test)?;
    let refs: HashMap<&str, String> = references
        .samples
        .iter()
        .filter_map(|s| s.summary.as_ref().map(|r| (s.id(), r.text())))
        .collect();
    let corpus_path = corpus.or(ctx.config.corpus.as_deref()).unwrap_or(reference);
    let dialogues = if corpus_path == reference {
        references.samples.clone()
    } else {
        load(corpus_path, Split::Infer)?.samples
    };
    let dialogues: HashMap<&str, &Dialogue> = dialogues.iter().map(|s| (s.id(), &s.dialogue)).collect();

    let mut preds = Vec::with_capacity(predictions.len());
    let mut golds = Vec::with_capacity(predictions.len());
    let mut ds = Vec::with_capacity(predictions.len());
    for p in &predictions {
        let gold = refs
            .get(p.id.as_str())
            .ok_or_else(|| anyhow!("no reference summary for {}", p.id))?;
        let d = dialogues
            .get(p.id.as_str())
            .ok_or_else(|| anyhow!("no dialogue for {}", p.id))?;
        preds.push(p.summary.as_str());
        golds.push(gold.as_str());
        ds.push((*d).clone());
    }
    let report = evaluate_corpus(&preds, &golds, &ds, EvalOptions { stem })?;
    println!("records       {}", preds.len());
    println!("ROUGE-1       {:.2}", report.rouge1 * 100.0);
    println!("ROUGE-2       {:.2}", report.rouge2 * 100.0);
    println!("ROUGE-L       {:.2}", report.rouge_l * 100.0);
    println!("length ratio  {:.3}", report.length_ratio);
    if let Some(path) = report_path {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
