//! Corpus directories and the steps shared by subcommands.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, ensure, Context, Result};
use discourse_core::corpus::{build_vocab, compute_idf, index_threads, ContentWordSelector, HeuristicSelector, IdentitySelector};
use discourse_core::dataset::{build_examples, chains_of, ChainExample, Features};
use discourse_core::embed::{train_comment_embeddings, train_word_embeddings, CommentEmbeddings};
use discourse_core::train::{split_validation, train_fold, FoldPlan, FoldResult, LogRow, TrainObserver};
use discourse_core::{IdfKind, IdfTable, Tensor, Thread, Vocab};

use crate::config::RunConfig;
use crate::formats::{self, Element};
use crate::jsonl;

pub const THREADS: &str = "threads.jsonl";
pub const VOCAB: &str = "vocab.tsv";
pub const IDF_THREAD: &str = "idf_thread.tsv";
pub const IDF_COMMENT: &str = "idf_comment.tsv";
pub const CHAINS: &str = "chains.tsv";
pub const WORDS: &str = "word_embeddings.bin";
pub const WORD_ROWS: &str = "word_embeddings.tsv";
pub const COMMENTS: &str = "comment_embeddings.bin";
pub const COMMENT_ROWS: &str = "comment_embeddings.tsv";
pub const RUN_CONFIG: &str = "run_config.json";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const FOLDS: &str = "folds.tsv";

/// An ingested corpus with its vocabulary and idf tables.
pub struct Corpus {
    pub threads: Vec<Thread>,
    pub vocab: Vocab,
    pub thread_idf: IdfTable,
    pub comment_idf: IdfTable,
}

impl Corpus {
    pub fn comment_count(&self) -> usize {
        self.threads.iter().map(|t| t.comments.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestSummary {
    pub threads: usize,
    pub comments: usize,
    pub skipped_lines: usize,
    pub dropped: usize,
    pub chains: usize,
    pub vocab: usize,
}

pub fn ingest(input: &Path, out: &Path, cfg: &RunConfig) -> Result<IngestSummary> {
    let report = jsonl::parse_threads(input)?;
    let mut threads = report.threads;
    let vocab = build_vocab(&threads, cfg.min_count)?;
    index_threads(&mut threads, &vocab);
    let thread_idf = compute_idf(&threads, IdfKind::Thread)?;
    let comment_idf = compute_idf(&threads, IdfKind::Comment)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    jsonl::write_threads(&out.join(THREADS), &threads)?;
    formats::save_vocab(&out.join(VOCAB), &vocab)?;
    formats::save_idf(&out.join(IDF_THREAD), &thread_idf, &vocab)?;
    formats::save_idf(&out.join(IDF_COMMENT), &comment_idf, &vocab)?;
    let chains = chains_of(&threads, cfg.min_chain_len);
    let mut manifest = String::from("thread_id\tlength\tcomment_ids\n");
    for (t, c) in &chains {
        let ids: Vec<&str> = c.comments.iter().map(|&i| threads[*t].comments[i].id.as_str()).collect();
        manifest.push_str(&format!("{}\t{}\t{}\n", threads[*t].id, c.len(), ids.join(" ")));
    }
    std::fs::write(out.join(CHAINS), manifest)?;
    Ok(IngestSummary {
        threads: threads.len(),
        comments: threads.iter().map(|t| t.comments.len()).sum(),
        skipped_lines: report.errors.len(),
        dropped: report.dropped,
        chains: chains.len(),
        vocab: vocab.len(),
    })
}

/// Threads of `path` indexed against an existing vocabulary.
pub fn load_threads(path: &Path, vocab: &Vocab) -> Result<Vec<Thread>> {
    let mut threads = jsonl::parse_threads(path)?.threads;
    index_threads(&mut threads, vocab);
    Ok(threads)
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let vocab = formats::load_vocab(&dir.join(VOCAB))?;
    let threads = load_threads(&dir.join(THREADS), &vocab)?;
    let comments = threads.iter().map(|t| t.comments.len()).sum();
    let thread_idf = formats::load_idf(&dir.join(IDF_THREAD), IdfKind::Thread, threads.len(), &vocab)?;
    let comment_idf = formats::load_idf(&dir.join(IDF_COMMENT), IdfKind::Comment, comments, &vocab)?;
    Ok(Corpus {
        threads,
        vocab,
        thread_idf,
        comment_idf,
    })
}

pub fn embed(dir: &Path, corpus: &Corpus, cfg: &RunConfig, comments: bool) -> Result<()> {
    let words = train_word_embeddings(&corpus.threads, &corpus.vocab, &cfg.word_embed_config())?;
    formats::save_matrix(&dir.join(WORDS), &words)?;
    formats::save_rows(&dir.join(WORD_ROWS), (0..corpus.vocab.len()).map(|i| corpus.vocab.token(i).to_string()))?;
    if comments {
        let c = train_comment_embeddings(&corpus.threads, &corpus.vocab, &cfg.comment_embed_config())?;
        formats::save_matrix(&dir.join(COMMENTS), &c.vectors)?;
        formats::save_rows(&dir.join(COMMENT_ROWS), c.keys.iter().map(|(t, c)| format!("{t}\t{c}")))?;
    }
    Ok(())
}

pub fn load_word_embeddings(dir: &Path, vocab: &Vocab) -> Result<Option<Tensor<f32>>> {
    let path = dir.join(WORDS);
    if !path.exists() {
        return Ok(None);
    }
    let m: Tensor<f32> = formats::load_matrix(&path)?;
    ensure!(m.rows() == vocab.len(), "{} has {} rows for a vocabulary of {}", path.display(), m.rows(), vocab.len());
    Ok(Some(m))
}

pub fn load_comment_embeddings(dir: &Path) -> Result<Option<CommentEmbeddings>> {
    let path = dir.join(COMMENTS);
    if !path.exists() {
        return Ok(None);
    }
    let m: Tensor<f32> = formats::load_matrix(&path)?;
    let keys = formats::load_rows(&dir.join(COMMENT_ROWS))?
        .into_iter()
        .map(|l| {
            let (t, c) = l.split_once('\t').context("comment row label")?;
            Ok((t.to_string(), c.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(CommentEmbeddings::new(keys, m)?))
}

pub fn selector(cfg: &RunConfig) -> Box<dyn ContentWordSelector> {
    match cfg.selector.as_str() {
        "identity" => Box::new(IdentitySelector),
        _ => Box::new(HeuristicSelector),
    }
}

/// Pretrained inputs an architecture needs, checked against the run config.
pub struct Inputs {
    pub words: Option<Tensor<f32>>,
    pub comments: Option<CommentEmbeddings>,
}

pub fn inputs(dir: &Path, corpus: &Corpus, cfg: &RunConfig) -> Result<Inputs> {
    let arch = cfg.architecture()?;
    let words = if arch.uses_words() { load_word_embeddings(dir, &corpus.vocab)? } else { None };
    let comments = if arch.uses_vectors() { load_comment_embeddings(dir)? } else { None };
    if let Some(w) = &words {
        ensure!(w.cols() == cfg.word_dim, "word embeddings have {} columns, word_dim is {}", w.cols(), cfg.word_dim);
    }
    if let Some(c) = &comments {
        ensure!(c.dim() == cfg.comment_dim, "comment embeddings have {} columns, comment_dim is {}", c.dim(), cfg.comment_dim);
    }
    if arch.uses_attention() && words.is_none() {
        bail!("{arch} needs word embeddings; run `embed` on {} first", dir.display());
    }
    if arch.uses_vectors() && comments.is_none() {
        bail!("{arch} needs comment embeddings; run `embed` on {} first", dir.display());
    }
    if arch.uses_words() && words.is_none() {
        log::warn!("no word embeddings in {}; {arch} starts from random vectors", dir.display());
    }
    Ok(Inputs { words, comments })
}

pub fn examples(threads: &[Thread], corpus: &Corpus, cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<ChainExample>> {
    let arch = cfg.architecture()?;
    let sel = selector(cfg);
    let features = Features {
        vocab: &corpus.vocab,
        word_embeddings: if arch.uses_attention() { inputs.words.as_ref() } else { None },
        thread_idf: Some(&corpus.thread_idf),
        comment_idf: Some(&corpus.comment_idf),
        selector: sel.as_ref(),
        comment_vectors: inputs.comments.as_ref(),
    };
    Ok(build_examples(threads, cfg.min_chain_len, &features))
}

pub fn write_folds(path: &Path, examples: &[ChainExample], plan: &FoldPlan) -> Result<()> {
    let mut text = String::from("thread_id\tcomment_ids\tstratum\tfold\n");
    for (i, e) in examples.iter().enumerate() {
        text.push_str(&format!("{}\t{}\t{}\t{}\n", e.thread_id, e.comment_ids.join(" "), plan.keys[i], plan.assignment[i]));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Worker count: available cores capped by `DISCOURSE_CHAIN_THREADS`.
pub fn workers(deterministic: bool) -> usize {
    if deterministic {
        return 1;
    }
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("DISCOURSE_CHAIN_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(cap) if cap > 0 => cores.min(cap),
        _ => cores,
    }
}

struct Progress;

impl<T> TrainObserver<T> for Progress {
    fn row(&mut self, r: &LogRow) {
        log::info!(
            "fold {} len {} epoch {}: loss {:.4} acc {:.3} val_loss {} val_f1 {}",
            r.fold,
            r.bucket_len,
            r.epoch,
            r.loss,
            r.train_acc,
            r.val_loss.map_or("-".into(), |v| format!("{v:.4}")),
            r.val_f1.map_or("-".into(), |v| format!("{v:.3}")),
        );
    }
}

/// Trains every fold of `plan` on up to `workers` threads. Results are in
/// fold order and independent of the worker count.
pub fn train_folds<T: Element>(
    cfg: &RunConfig,
    vocab_size: usize,
    words: Option<&Tensor<f32>>,
    examples: &[ChainExample],
    plan: &FoldPlan,
    workers: usize,
) -> Result<Vec<FoldResult<T>>> {
    let base = cfg.model_config(vocab_size)?;
    let tc = cfg.train_config();
    let words: Option<Tensor<T>> = words.map(Tensor::cast);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<discourse_core::Result<FoldResult<T>>>>> = Mutex::new((0..plan.k).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, plan.k) {
            s.spawn(|| loop {
                let fold = next.fetch_add(1, Ordering::SeqCst);
                if fold >= plan.k {
                    break;
                }
                let (train, val) = split_validation(examples, &plan.train_indices(fold), tc.val_fraction, tc.seed + fold as u64);
                let r = train_fold(&base, words.as_ref(), examples, &train, &val, &tc, fold, &mut Progress);
                results.lock().expect("results lock")[fold] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .enumerate()
        .map(|(f, r)| r.expect("fold ran").with_context(|| format!("training fold {f}")))
        .collect()
}

pub fn write_log(path: &Path, folds: &[impl AsRef<[LogRow]>]) -> Result<()> {
    let mut text = String::from("fold,bucket_len,epoch,loss,train_acc,val_loss,val_f1\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for rows in folds {
        for r in rows.as_ref() {
            text.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.fold,
                r.bucket_len,
                r.epoch,
                r.loss,
                r.train_acc,
                opt(r.val_loss),
                opt(r.val_f1)
            ));
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn ensure_dir(p: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    Ok(p.to_path_buf())
}
