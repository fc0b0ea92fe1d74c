//! Cross-validation folds, length buckets, and the bucketed training loop.
//!
//! Within a fold, buckets are trained in ascending chain length. The model for
//! each bucket starts from the previous bucket's weights.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::corpus::DiscourseAct;
use crate::dataset::ChainExample;
use crate::eval::{evaluate_pairs, Metrics};
use crate::models::{pad_comment, ChainBatch, Model, ModelConfig};
use crate::nn::{Adam, Optimizer, Real, Tape, Tensor};
use crate::rng::seeded;
use crate::{Error, Result};

/// Stratification key of a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Stratify {
    #[default]
    Length,
    /// Gold act of the root comment (unlabelled roots share one key).
    FirstLabel,
}

impl Stratify {
    pub fn key(self, example: &ChainExample) -> usize {
        match self {
            Stratify::Length => example.len(),
            Stratify::FirstLabel => example
                .gold
                .first()
                .copied()
                .flatten()
                .map_or(DiscourseAct::COUNT, DiscourseAct::code),
        }
    }
}

/// Fold assignment of every chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
    /// Stratum of each chain after merging small strata.
    pub keys: Vec<usize>,
    /// Strata that were merged, as `(from, into)`.
    pub merged: Vec<(usize, usize)>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }
}

/// Stratified `k`-fold assignment. Strata with fewer than `k` members are
/// merged into the nearest stratum by key. Members of each stratum are
/// shuffled and dealt round-robin, with the deal position carried across
/// strata so fold sizes also stay within one of each other.
pub fn make_folds(keys: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("{k} folds")));
    }
    if keys.len() < k {
        return Err(Error::CorpusTooSmall(format!("{} chains for {k} folds", keys.len())));
    }
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &key) in keys.iter().enumerate() {
        strata.entry(key).or_default().push(i);
    }
    let mut merged = Vec::new();
    while strata.len() > 1 {
        let Some((&small, _)) = strata.iter().filter(|(_, m)| m.len() < k).min_by_key(|(_, m)| m.len()) else {
            break;
        };
        let into = *strata
            .keys()
            .filter(|&&key| key != small)
            .min_by_key(|&&key| (key.abs_diff(small), key))
            .expect("another stratum");
        let members = strata.remove(&small).expect("present");
        strata.get_mut(&into).expect("present").extend(members);
        merged.push((small, into));
    }
    let mut rng = seeded(seed, 10);
    let mut assignment = vec![0; keys.len()];
    let mut effective = vec![0; keys.len()];
    let mut deal = 0;
    for (&key, members) in strata.iter_mut() {
        members.sort_unstable();
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = deal % k;
            effective[i] = key;
            deal += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignment,
        keys: effective,
        merged,
    })
}

/// Chains of one length and their padded comment width.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bucket {
    pub len: usize,
    pub c_max: usize,
    pub members: Vec<usize>,
}

/// Nearest-rank 95th percentile of `counts`, at least 1 and at most `cap`.
pub fn padded_width(counts: &mut [usize], cap: usize) -> usize {
    if counts.is_empty() {
        return 1;
    }
    counts.sort_unstable();
    let rank = (counts.len() * 95).div_ceil(100).max(1);
    counts[rank - 1].clamp(1, cap.max(1))
}

/// One bucket per chain length, ascending. `indices` select from `examples`.
pub fn bucket_by_length(examples: &[ChainExample], indices: &[usize], cap: usize) -> Vec<Bucket> {
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        by_len.entry(examples[i].len()).or_default().push(i);
    }
    by_len
        .into_iter()
        .map(|(len, members)| {
            let mut counts: Vec<usize> = members
                .iter()
                .flat_map(|&i| examples[i].tokens.iter().map(Vec::len))
                .collect();
            Bucket {
                len,
                c_max: padded_width(&mut counts, cap),
                members,
            }
        })
        .collect()
}

/// PAD-filled token rows and masks of every comment of `chain`.
pub fn pad_chain(chain: &ChainExample, c_max: usize) -> (Vec<Vec<usize>>, Vec<Vec<bool>>) {
    chain.tokens.iter().map(|t| pad_comment(t, c_max)).unzip()
}

/// Inverse-frequency class weights `n / (present_classes · n_c)`; absent
/// classes weigh 0.
pub fn class_weights(examples: &[&ChainExample]) -> Vec<f64> {
    let mut counts = [0usize; DiscourseAct::COUNT];
    for g in examples.iter().flat_map(|e| e.gold.iter().flatten()) {
        counts[g.code()] += 1;
    }
    let total: usize = counts.iter().sum();
    let present = counts.iter().filter(|&&c| c > 0).count();
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { total as f64 / (present * c) as f64 })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Epochs without validation improvement before stopping a bucket.
    pub patience: usize,
    pub batch_size: usize,
    pub optimizer: Adam,
    pub class_weights: bool,
    pub c_max_cap: usize,
    /// Share of each training fold's length group held out for early stopping.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            patience: 3,
            batch_size: 32,
            optimizer: Adam::default(),
            class_weights: true,
            c_max_cap: 120,
            val_fraction: 0.1,
            seed: 7,
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub fold: usize,
    pub bucket_len: usize,
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_f1: Option<f64>,
}

/// The model trained for one bucket.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketModel<T> {
    pub len: usize,
    pub c_max: usize,
    pub model: Model<T>,
    /// Write index of the bucket within its fold (0 = shortest).
    pub stage: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult<T> {
    pub fold: usize,
    pub models: Vec<BucketModel<T>>,
    pub log: Vec<LogRow>,
    /// Optimizer steps skipped for non-finite gradients, summed over tensors.
    pub skipped: usize,
}

impl<T> FoldResult<T> {
    /// Model for chains of length `len`: its own bucket, else the longest
    /// shorter one, else the shortest.
    pub fn model_for(&self, len: usize) -> Option<&BucketModel<T>> {
        self.models
            .iter()
            .filter(|m| m.len <= len)
            .max_by_key(|m| m.len)
            .or_else(|| self.models.iter().min_by_key(|m| m.len))
    }
}

/// Splits `indices` into (train, validation), holding out `fraction` of each
/// length group.
pub fn split_validation(examples: &[ChainExample], indices: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        by_len.entry(examples[i].len()).or_default().push(i);
    }
    let mut rng = seeded(seed, 11);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (_, mut group) in by_len {
        group.shuffle(&mut rng);
        let n_val = (group.len() as f64 * fraction) as usize;
        val.extend_from_slice(&group[..n_val]);
        train.extend_from_slice(&group[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Hooks into the training loop.
pub trait TrainObserver<T> {
    fn row(&mut self, _row: &LogRow) {}
    /// Called after each optimizer step with the batch and the model.
    fn batch(&mut self, _batch: &ChainBatch<T>, _model: &Model<T>) {}
    /// Called when a bucket's model is first instantiated.
    fn bucket_start(&mut self, _bucket: &Bucket, _model: &Model<T>) {}
    fn bucket_end(&mut self, _bucket: &Bucket, _model: &Model<T>) {}
}

impl<T> TrainObserver<T> for () {}

/// Trains one fold. `train` and `val` index into `examples`.
#[allow(clippy::too_many_arguments)]
pub fn train_fold<T: Real>(
    base: &ModelConfig,
    word_embeddings: Option<&Tensor<T>>,
    examples: &[ChainExample],
    train: &[usize],
    val: &[usize],
    config: &TrainConfig,
    fold: usize,
    observer: &mut dyn TrainObserver<T>,
) -> Result<FoldResult<T>> {
    if train.is_empty() {
        return Err(Error::CorpusTooSmall(format!("fold {fold} has no training chains")));
    }
    let mut rng = seeded(config.seed, 100 + fold as u64);
    let train_refs: Vec<&ChainExample> = train.iter().map(|&i| &examples[i]).collect();
    let weights: Option<Vec<T>> = config
        .class_weights
        .then(|| class_weights(&train_refs).into_iter().map(T::lit).collect());
    let mut val_by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in val {
        val_by_len.entry(examples[i].len()).or_default().push(i);
    }
    let buckets = bucket_by_length(examples, train, config.c_max_cap);
    let mut models: Vec<BucketModel<T>> = Vec::new();
    let mut log = Vec::new();
    let mut skipped = 0;
    for (stage, bucket) in buckets.iter().enumerate() {
        let mut model = match models.last() {
            None => {
                let mut cfg = base.clone();
                cfg.c_max = bucket.c_max;
                let mut m = Model::new(cfg, &mut rng)?;
                if let Some(table) = word_embeddings {
                    if base.arch.uses_words() {
                        m.set_word_embeddings(table)?;
                    }
                }
                m
            }
            Some(prev) => prev.model.transfer(bucket.c_max, &mut rng)?,
        };
        observer.bucket_start(bucket, &model);
        let val_members = val_by_len.get(&bucket.len).map(Vec::as_slice).unwrap_or(&[]);
        let mut best: Option<(f64, Model<T>)> = None;
        let mut stale = 0;
        let mut order = bucket.members.clone();
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let (mut loss_sum, mut loss_batches) = (0.0, 0usize);
            let (mut correct, mut labelled) = (0usize, 0usize);
            for (bi, chunk) in order.chunks(config.batch_size.max(1)).enumerate() {
                let refs: Vec<&ChainExample> = chunk.iter().map(|&i| &examples[i]).collect();
                let batch = ChainBatch::<T>::new(&refs, bucket.len, bucket.c_max)?;
                let mut tape = Tape::new();
                let b = model.store.bind(&mut tape);
                let (loss, out) = model.loss(&mut tape, &b, &batch, weights.as_deref())?;
                let value = tape.value(loss).data()[0];
                if !value.is_finite() {
                    let ids: Vec<String> = refs.iter().map(|e| e.thread_id.clone()).collect();
                    return Err(Error::NonFiniteLoss {
                        bucket_len: bucket.len,
                        epoch,
                        batch: bi,
                        detail: format!("loss {value:?}; threads {ids:?}"),
                    });
                }
                let probs = tape.value(out.probs);
                for (r, g) in batch.gold.iter().enumerate() {
                    if let Some(g) = g {
                        labelled += 1;
                        correct += (crate::models::argmax(probs.row(r)) == *g) as usize;
                    }
                }
                let mut grads = tape.backward(loss);
                let grads = b.grads(&model.store, &mut grads);
                skipped += config.optimizer.step(&mut model.store, &grads).skipped;
                loss_sum += value.as_f64();
                loss_batches += 1;
                observer.batch(&batch, &model);
            }
            let (val_loss, val_f1) = if val_members.is_empty() {
                (None, None)
            } else {
                let (l, m) = validate(&model, examples, val_members, bucket, config, weights.as_deref())?;
                (Some(l), Some(m.weighted.f1))
            };
            let row = LogRow {
                fold,
                bucket_len: bucket.len,
                epoch,
                loss: loss_sum / loss_batches.max(1) as f64,
                train_acc: if labelled == 0 { 0.0 } else { correct as f64 / labelled as f64 },
                val_loss,
                val_f1,
            };
            observer.row(&row);
            log.push(row);
            if let Some(vl) = val_loss {
                if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                    best = Some((vl, model.clone()));
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= config.patience {
                        break;
                    }
                }
            }
        }
        if let Some((_, m)) = best {
            model = m;
        }
        observer.bucket_end(bucket, &model);
        models.push(BucketModel {
            len: bucket.len,
            c_max: bucket.c_max,
            model,
            stage,
        });
    }
    Ok(FoldResult {
        fold,
        models,
        log,
        skipped,
    })
}

fn validate<T: Real>(
    model: &Model<T>,
    examples: &[ChainExample],
    members: &[usize],
    bucket: &Bucket,
    config: &TrainConfig,
    weights: Option<&[T]>,
) -> Result<(f64, Metrics)> {
    let (mut loss, mut n) = (0.0, 0usize);
    let mut pairs = Vec::new();
    for chunk in members.chunks(config.batch_size.max(1)) {
        let refs: Vec<&ChainExample> = chunk.iter().map(|&i| &examples[i]).collect();
        let batch = ChainBatch::<T>::new(&refs, bucket.len, bucket.c_max)?;
        let mut tape = Tape::new();
        let b = model.store.bind_frozen(&mut tape);
        let (l, _) = model.loss(&mut tape, &b, &batch, weights)?;
        loss += tape.value(l).data()[0].as_f64();
        n += 1;
        let pred = model.predict(&batch)?.argmax();
        for (r, g) in batch.gold.iter().enumerate() {
            if let Some(g) = g {
                pairs.push((*g, pred[r]));
            }
        }
    }
    Ok((loss / n.max(1) as f64, evaluate_pairs(&pairs, DiscourseAct::COUNT)))
}

/// Every fold of a cross-validation run, sequentially.
pub fn train_run<T: Real>(
    base: &ModelConfig,
    word_embeddings: Option<&Tensor<T>>,
    examples: &[ChainExample],
    plan: &FoldPlan,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver<T>,
) -> Result<Vec<FoldResult<T>>> {
    (0..plan.k)
        .map(|fold| {
            let (train, val) = split_validation(examples, &plan.train_indices(fold), config.val_fraction, config.seed + fold as u64);
            train_fold(base, word_embeddings, examples, &train, &val, config, fold, observer)
        })
        .collect()
}
