mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;

#[derive(Parser)]
#[command(name = "dialsum", version, about = "Sketch-then-summarize dialogue summarization")]
struct Cli {
    /// Seed for anything randomized (cut model initialization).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Only report errors.
    #[arg(long, short, global = true)]
    quiet: bool,

    /// JSON settings file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct PhraseArgs {
    /// JSONL of {"id", "trees": [bracketed tree or null per turn]}.
    #[arg(long)]
    pub trees: Option<PathBuf>,
    /// JSON array of intent labeling rules replacing the built-in set.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Stopword list, one word per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Minimum LCS length for a key phrase.
    #[arg(long)]
    pub min_lcs: Option<usize>,
    /// Sketch rendering: plain or hash.
    #[arg(long)]
    pub sketch_style: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Clean, merge and write a canonical JSONL corpus.
    Preprocess {
        input: PathBuf,
        output: PathBuf,
        /// train, dev, test or infer (infer drops summaries).
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Build a summary sketch per sample.
    Sketch {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        phrases: PhraseArgs,
    },
    /// Align summary sentences to turns and write cut pseudo-labels.
    Segment {
        input: PathBuf,
        output: PathBuf,
        /// ROUGE-1 quantity used as similarity: f1, recall or precision.
        #[arg(long)]
        sim: Option<String>,
    },
    /// Train the cut classifier on pseudo-labels.
    TrainCutter {
        input: PathBuf,
        labels: PathBuf,
        model_out: PathBuf,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        l2: Option<f64>,
        #[command(flatten)]
        phrases: PhraseArgs,
    },
    /// Write per-turn cut probabilities.
    PredictCuts {
        input: PathBuf,
        model: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        phrases: PhraseArgs,
    },
    /// Write generator training pairs.
    EmitTraining {
        input: PathBuf,
        output: PathBuf,
        /// Pseudo-labels from `segment`; aligned on the fly when absent.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Sketch covering the highlighted segment or the whole dialogue.
        #[arg(long)]
        sketch_scope: Option<String>,
        #[command(flatten)]
        phrases: PhraseArgs,
    },
    /// Summarize dialogues.
    Summarize {
        input: PathBuf,
        output: PathBuf,
        /// auto, one or k=K.
        #[arg(long)]
        mode: Option<String>,
        /// longest, echo or remote:URL.
        #[arg(long)]
        generator: Option<String>,
        /// JSONL of {"id", "probs"} replacing the cut model.
        #[arg(long)]
        probs: Option<PathBuf>,
        /// Cut model file from `train-cutter`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        max_tokens: Option<usize>,
        #[command(flatten)]
        phrases: PhraseArgs,
    },
    /// Score predictions with ROUGE and length ratio.
    Evaluate {
        pred: PathBuf,
        reference: PathBuf,
        /// Corpus holding the dialogues; defaults to the reference file.
        corpus: Option<PathBuf>,
        /// Porter-stem tokens (default).
        #[arg(long, overrides_with = "no_stem")]
        stem: bool,
        #[arg(long)]
        no_stem: bool,
        /// Write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Error
        } else {
            log::LevelFilter::Info
        })
        .parse_default_env()
        .format_target(false)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let ctx = commands::Context {
        config,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Preprocess { input, output, split } => commands::preprocess(&ctx, &input, &output, &split),
        Command::Sketch { input, output, phrases } => commands::sketch(&ctx, &input, &output, &phrases),
        Command::Segment { input, output, sim } => commands::segment(&ctx, &input, &output, sim),
        Command::TrainCutter {
            input,
            labels,
            model_out,
            lr,
            epochs,
            l2,
            phrases,
        } => commands::train_cutter(&ctx, &input, &labels, &model_out, (lr, epochs, l2), &phrases),
        Command::PredictCuts {
            input,
            model,
            output,
            phrases,
        } => commands::predict_cuts(&ctx, &input, &model, &output, &phrases),
        Command::EmitTraining {
            input,
            output,
            labels,
            sketch_scope,
            phrases,
        } => commands::emit_training(&ctx, &input, &output, labels.as_deref(), sketch_scope, &phrases),
        Command::Summarize {
            input,
            output,
            mode,
            generator,
            probs,
            model,
            threshold,
            max_tokens,
            phrases,
        } => commands::summarize(
            &ctx,
            &input,
            &output,
            commands::SummarizeArgs {
                mode,
                generator,
                probs,
                model,
                threshold,
                max_tokens,
            },
            &phrases,
        ),
        Command::Evaluate {
            pred,
            reference,
            corpus,
            stem,
            no_stem,
            report,
        } => {
            let stem = match (stem, no_stem) {
                (true, _) => Some(true),
                (_, true) => Some(false),
                _ => None,
            };
            commands::evaluate(&ctx, &pred, &reference, corpus.as_deref(), stem, report.as_deref())
        }
    }
}
