//! Subcommand definitions and dispatch.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use discourse_core::analyze::{dump_relevance, partition_users, temporal_fractions, timestamped_acts, EdgeRules, SignedUserGraph};
use discourse_core::dataset::ChainExample;
use discourse_core::eval::{aggregate, chain_count_histogram, evaluate_pairs, evaluate_without_other, labelled_pairs, tag, ChainPrediction};
use discourse_core::train::{make_folds, BucketModel};
use discourse_core::DiscourseAct;
use serde_json::json;

use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::formats::Element;
use crate::pipeline::{self, ensure_dir, Corpus};
use crate::report;

#[derive(Debug, Parser)]
#[command(name = "discourse-chain", version, about = "Discourse-act tagging over comment reply chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse threads and write the vocabulary, idf tables and chain manifest.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train word (and comment) embeddings into the corpus directory.
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        /// Skip comment vectors.
        #[arg(long)]
        words_only: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Cross-validated, length-bucketed training.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Test every fold's held-out chains and write metrics.
    Evaluate {
        #[arg(long)]
        ckpt_dir: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Defaults to the checkpoint directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tag new threads with one fold's checkpoints.
    Tag {
        #[arg(long)]
        ckpt_dir: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Dump word relevance of held-out chains (attention models only).
    Relevance {
        #[arg(long)]
        ckpt_dir: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Discourse fractions over time and the signed user partition.
    Characterize {
        #[arg(long)]
        corpus: PathBuf,
        /// Predictions to use instead of gold acts.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectorArg {
    Heuristic,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

/// Run configuration overrides; flags win over `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub word_dim: Option<usize>,
    #[arg(long)]
    pub comment_dim: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub min_chain_len: Option<usize>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long, value_enum)]
    pub class_weights: Option<OnOff>,
    #[arg(long, value_enum)]
    pub selector: Option<SelectorArg>,
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Window of the temporal series, in seconds.
    #[arg(long)]
    pub window: Option<i64>,
    #[arg(long, value_enum)]
    pub humor_negative: Option<OnOff>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.arch {
            c.arch = v.clone();
        }
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { c.$f = v; } )*};
        }
        set!(word_dim, comment_dim, folds, min_chain_len, min_count, seed, epochs, batch_size, lr, window);
        if self.deterministic {
            c.deterministic = true;
        }
        if let Some(v) = self.class_weights {
            c.class_weights = v == OnOff::On;
        }
        if let Some(v) = self.humor_negative {
            c.humor_negative = v == OnOff::On;
        }
        if let Some(v) = self.selector {
            c.selector = match v {
                SelectorArg::Heuristic => "heuristic",
                SelectorArg::Identity => "identity",
            }
            .into();
        }
        if let Some(v) = self.precision {
            c.precision = match v {
                PrecisionArg::F32 => "f32",
                PrecisionArg::F64 => "f64",
            }
            .into();
        }
        c.validate().map_err(|e| anyhow::Error::new(CliError::usage(e.to_string())))?;
        Ok(c)
    }
}

fn resolve(o: &Overrides) -> CliResult<RunConfig> {
    o.resolve().map_err(|e| match e.downcast::<CliError>() {
        Ok(cli) => cli,
        Err(e) => CliError::Data(e),
    })
}

/// Parses `argv` and runs the subcommand, mapping failures to exit codes.
pub fn run_command<I, S>(argv: I) -> u8
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            e.exit_code()
        }
    }
}

fn chain(e: &CliError) -> String {
    match e {
        CliError::Data(a) | CliError::Numeric(a) => format!("{a:#}"),
        CliError::Usage(s) => s.clone(),
    }
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Ingest { input, out, overrides } => {
            let cfg = resolve(&overrides)?;
            let s = pipeline::ingest(&input, &out, &cfg)?;
            log::info!(
                "{} threads, {} comments, {} chains, vocabulary {}; {} lines skipped, {} comments dropped",
                s.threads,
                s.comments,
                s.chains,
                s.vocab,
                s.skipped_lines,
                s.dropped
            );
            Ok(())
        }
        Command::Embed {
            corpus,
            words_only,
            overrides,
        } => {
            let cfg = resolve(&overrides)?;
            let c = pipeline::load_corpus(&corpus)?;
            pipeline::embed(&corpus, &c, &cfg, !words_only)?;
            Ok(())
        }
        Command::Train { corpus, out, overrides } => {
            let cfg = resolve(&overrides)?;
            match cfg.precision.as_str() {
                "f64" => train::<f64>(&corpus, &out, &cfg),
                _ => train::<f32>(&corpus, &out, &cfg),
            }
        }
        Command::Evaluate { ckpt_dir, corpus, out } => {
            let cfg = RunConfig::load(&ckpt_dir.join(pipeline::RUN_CONFIG))?;
            let out = out.unwrap_or_else(|| ckpt_dir.clone());
            match cfg.precision.as_str() {
                "f64" => evaluate::<f64>(&ckpt_dir, &corpus, &out, &cfg),
                _ => evaluate::<f32>(&ckpt_dir, &corpus, &out, &cfg),
            }
        }
        Command::Tag {
            ckpt_dir,
            corpus,
            input,
            out,
            fold,
        } => {
            let cfg = RunConfig::load(&ckpt_dir.join(pipeline::RUN_CONFIG))?;
            match cfg.precision.as_str() {
                "f64" => tag_threads::<f64>(&ckpt_dir, &corpus, &input, &out, fold, &cfg),
                _ => tag_threads::<f32>(&ckpt_dir, &corpus, &input, &out, fold, &cfg),
            }
        }
        Command::Relevance { ckpt_dir, corpus, out } => {
            let cfg = RunConfig::load(&ckpt_dir.join(pipeline::RUN_CONFIG))?;
            match cfg.precision.as_str() {
                "f64" => relevance::<f64>(&ckpt_dir, &corpus, &out, &cfg),
                _ => relevance::<f32>(&ckpt_dir, &corpus, &out, &cfg),
            }
        }
        Command::Characterize {
            corpus,
            predictions,
            out,
            overrides,
        } => {
            let cfg = resolve(&overrides)?;
            characterize(&corpus, predictions.as_deref(), &out, &cfg)
        }
    }
}

fn train<T: Element>(corpus_dir: &Path, out: &Path, cfg: &RunConfig) -> CliResult<()> {
    let corpus = pipeline::load_corpus(corpus_dir)?;
    let inputs = pipeline::inputs(corpus_dir, &corpus, cfg)?;
    let examples = pipeline::examples(&corpus.threads, &corpus, cfg, &inputs)?;
    let strat = cfg.stratify()?;
    let keys: Vec<usize> = examples.iter().map(|e| strat.key(e)).collect();
    let plan = make_folds(&keys, cfg.folds, cfg.seed)?;
    for (from, into) in &plan.merged {
        log::info!("stratum {from} merged into {into}");
    }
    ensure_dir(out)?;
    cfg.save(&out.join(pipeline::RUN_CONFIG))?;
    pipeline::write_folds(&out.join(pipeline::FOLDS), &examples, &plan)?;
    let workers = pipeline::workers(cfg.deterministic);
    log::info!("{} chains, {} folds, {workers} workers", examples.len(), plan.k);
    let results = pipeline::train_folds::<T>(cfg, corpus.vocab.len(), inputs.words.as_ref(), &examples, &plan, workers)?;
    for r in &results {
        for m in &r.models {
            checkpoint::save(out, m, r.fold, cfg.seed)?;
        }
        if r.skipped > 0 {
            log::warn!("fold {}: {} tensor updates skipped for non-finite gradients", r.fold, r.skipped);
        }
    }
    let logs: Vec<&[discourse_core::train::LogRow]> = results.iter().map(|r| r.log.as_slice()).collect();
    pipeline::write_log(&out.join(pipeline::TRAIN_LOG), &logs)?;
    Ok(())
}

struct Held {
    corpus: Corpus,
    examples: Vec<ChainExample>,
    assignment: Vec<usize>,
}

fn held_out(corpus_dir: &Path, cfg: &RunConfig) -> Result<Held> {
    let corpus = pipeline::load_corpus(corpus_dir)?;
    let inputs = pipeline::inputs(corpus_dir, &corpus, cfg)?;
    let examples = pipeline::examples(&corpus.threads, &corpus, cfg, &inputs)?;
    let strat = cfg.stratify()?;
    let keys: Vec<usize> = examples.iter().map(|e| strat.key(e)).collect();
    let plan = make_folds(&keys, cfg.folds, cfg.seed)?;
    Ok(Held {
        corpus,
        examples,
        assignment: plan.assignment,
    })
}

fn check_vocab<T>(models: &[BucketModel<T>], vocab: usize) -> Result<()> {
    for m in models {
        ensure!(
            m.model.config.vocab_size == vocab,
            "checkpoint vocabulary {} differs from corpus vocabulary {vocab}",
            m.model.config.vocab_size
        );
    }
    Ok(())
}

fn predict_held_out<T: Element>(ckpt_dir: &Path, held: &Held, cfg: &RunConfig) -> Result<Vec<ChainPrediction>> {
    let folds = checkpoint::load_dir::<T>(ckpt_dir)?;
    let mut preds = Vec::new();
    for (fold, models) in &folds {
        check_vocab(models, held.corpus.vocab.len())?;
        let test: Vec<&ChainExample> = (0..held.examples.len())
            .filter(|&i| held.assignment[i] == *fold)
            .map(|i| &held.examples[i])
            .collect();
        preds.extend(tag(models, &test, cfg.batch_size)?);
    }
    Ok(preds)
}

fn evaluate<T: Element>(ckpt_dir: &Path, corpus_dir: &Path, out: &Path, cfg: &RunConfig) -> CliResult<()> {
    let held = held_out(corpus_dir, cfg)?;
    let preds = predict_held_out::<T>(ckpt_dir, &held, cfg)?;
    let comments = aggregate(&preds);
    let pairs = labelled_pairs(&comments);
    let ten = evaluate_pairs(&pairs, DiscourseAct::COUNT);
    let nine = evaluate_without_other(&pairs);
    let chain_pairs: Vec<(usize, usize)> = preds
        .iter()
        .flat_map(|p| p.gold.iter().zip(&p.pred).filter_map(|(g, d)| g.map(|g| (g.code(), d.code()))))
        .collect();
    let per_chain = evaluate_pairs(&chain_pairs, DiscourseAct::COUNT);
    ensure_dir(out)?;
    report::write_metrics_csv(&out.join("metrics.csv"), &ten, &[])?;
    report::write_metrics_csv(&out.join("metrics_nine.csv"), &nine, &[DiscourseAct::Other])?;
    report::write_confusion_tsv(&out.join("confusion.tsv"), &ten)?;
    report::write_predictions(&out.join("predictions.jsonl"), &comments)?;
    let hist: BTreeMap<String, usize> = chain_count_histogram(&comments)
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let summary = json!({
        "arch": cfg.arch,
        "chains": preds.len(),
        "comments": comments.len(),
        "labelled_comments": pairs.len(),
        "per_comment": report::metrics_json(&ten),
        "nine_class": report::metrics_json(&nine),
        "per_chain": report::metrics_json(&per_chain),
        "chains_per_comment": hist,
    });
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)? + "\n")?;
    log::info!("weighted F1 {:.4}, macro F1 {:.4} over {} comments", ten.weighted.f1, ten.macro_avg.f1, pairs.len());
    Ok(())
}

fn tag_threads<T: Element>(ckpt_dir: &Path, corpus_dir: &Path, input: &Path, out: &Path, fold: usize, cfg: &RunConfig) -> CliResult<()> {
    let corpus = pipeline::load_corpus(corpus_dir)?;
    let inputs = pipeline::inputs(corpus_dir, &corpus, cfg)?;
    if cfg.architecture()?.uses_vectors() {
        return Err(CliError::Data(anyhow::anyhow!(
            "{} reads pretrained comment vectors, which only exist for the training corpus",
            cfg.arch
        )));
    }
    let threads = pipeline::load_threads(input, &corpus.vocab)?;
    let examples = pipeline::examples(&threads, &corpus, cfg, &inputs)?;
    let folds = checkpoint::load_dir::<T>(ckpt_dir)?;
    let models = folds
        .iter()
        .find(|(f, _)| *f == fold)
        .map(|(_, m)| m)
        .with_context(|| format!("no checkpoints for fold {fold}"))?;
    check_vocab(models, corpus.vocab.len())?;
    let refs: Vec<&ChainExample> = examples.iter().collect();
    let preds = tag(models, &refs, cfg.batch_size)?;
    report::write_predictions(out, &aggregate(&preds))?;
    Ok(())
}

fn relevance<T: Element>(ckpt_dir: &Path, corpus_dir: &Path, out: &Path, cfg: &RunConfig) -> CliResult<()> {
    if !cfg.architecture()?.uses_attention() {
        return Err(CliError::Data(anyhow::anyhow!("{} has no attention", cfg.arch)));
    }
    let held = held_out(corpus_dir, cfg)?;
    let folds = checkpoint::load_dir::<T>(ckpt_dir)?;
    let mut records = Vec::new();
    for (fold, models) in &folds {
        check_vocab(models, held.corpus.vocab.len())?;
        let test: Vec<&ChainExample> = (0..held.examples.len())
            .filter(|&i| held.assignment[i] == *fold)
            .map(|i| &held.examples[i])
            .collect();
        records.extend(dump_relevance(models, &test, &held.corpus.vocab, cfg.batch_size)?);
    }
    report::write_relevance(out, &records)?;
    Ok(())
}

fn characterize(corpus_dir: &Path, predictions: Option<&Path>, out: &Path, cfg: &RunConfig) -> CliResult<()> {
    let corpus = pipeline::load_corpus(corpus_dir)?;
    let acts = match predictions {
        Some(p) => report::read_predictions(p)?,
        None => BTreeMap::new(),
    };
    ensure_dir(out)?;
    let series = temporal_fractions(&timestamped_acts(&corpus.threads, &acts), cfg.window)?;
    if series.skipped > 0 {
        log::warn!("{} comments without timestamps skipped", series.skipped);
    }
    report::write_series_csv(&out.join("series.csv"), &series)?;
    let rules = EdgeRules {
        humor_negative: cfg.humor_negative,
    };
    let graph = SignedUserGraph::from_threads(&corpus.threads, &acts, rules);
    let p = partition_users(&graph, cfg.seed)?;
    report::write_partition(&out.join("partition.json"), &graph, &p)?;
    Ok(())
}
