//! Skip-gram with negative sampling for word vectors and PV-DBOW for comment
//! vectors.
//!
//! Both trainers sample negatives from the unigram distribution raised to
//! 0.75, decay the learning rate linearly, and run single-threaded so that a
//! fixed seed reproduces the matrices bit for bit.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::corpus::{Thread, Vocab, PAD};
use crate::nn::{ops, Real, Tensor};
use crate::rng::{seeded, Rng as ChaRng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EmbedConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl EmbedConfig {
    pub fn words() -> Self {
        EmbedConfig {
            dim: 150,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            seed: 1,
        }
    }

    pub fn comments() -> Self {
        EmbedConfig {
            dim: 700,
            ..EmbedConfig::words()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim < 2 || self.window == 0 || self.epochs == 0 || self.lr <= 0.0 {
            return Err(Error::InvalidArgument(format!("embedding config {self:?}")));
        }
        Ok(())
    }
}

/// One positive pair with its negatives: `input` row predicts `output` row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub input: usize,
    pub output: usize,
    pub negatives: Vec<usize>,
}

/// Input (returned) and output (context) vectors of a negative-sampling model.
#[derive(Clone, Debug, PartialEq)]
pub struct SkipGram<T> {
    pub input: Tensor<T>,
    pub output: Tensor<T>,
}

/// Gradients of one [`Sample`]'s loss.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleGrad<T> {
    pub loss: T,
    pub input: Vec<T>,
    /// `(output row, gradient)` for the positive then each negative.
    pub outputs: Vec<(usize, Vec<T>)>,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `-ln σ(x)`, stable for large `|x|`.
fn neg_log_sigmoid<T: Real>(x: T) -> T {
    if x > T::zero() {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

impl<T: Real> SkipGram<T> {
    /// Input rows uniform in `±0.5/dim`, output rows zero; the PAD row is zero.
    pub fn new<R: Rng>(input_rows: usize, output_rows: usize, dim: usize, rng: &mut R) -> Self {
        let half = 0.5 / dim as f64;
        let mut input = Tensor::from_fn(input_rows, dim, |_, _| T::lit(rng.gen_range(-half..half)));
        if input_rows > PAD {
            input.row_mut(PAD).fill(T::zero());
        }
        SkipGram {
            input,
            output: Tensor::zeros(output_rows, dim),
        }
    }

    /// `-ln σ(u_o·v) - Σ_n ln σ(-u_n·v)` with `v = input[s.input]`.
    pub fn loss(&self, s: &Sample) -> T {
        self.loss_with(self.input.row(s.input), s)
    }

    fn loss_with(&self, v: &[T], s: &Sample) -> T {
        let mut loss = neg_log_sigmoid(dot(v, self.output.row(s.output)));
        for &n in &s.negatives {
            loss += neg_log_sigmoid(-dot(v, self.output.row(n)));
        }
        loss
    }

    pub fn grad(&self, s: &Sample) -> SampleGrad<T> {
        let v = self.input.row(s.input);
        let mut grad_in = vec![T::zero(); v.len()];
        let mut outputs = Vec::with_capacity(1 + s.negatives.len());
        let mut loss = T::zero();
        let pairs = core::iter::once((s.output, true)).chain(s.negatives.iter().map(|&n| (n, false)));
        for (row, positive) in pairs {
            let u = self.output.row(row);
            let score = dot(v, u);
            let label = if positive { T::one() } else { T::zero() };
            loss += neg_log_sigmoid(if positive { score } else { -score });
            // d/dscore of the logistic loss
            let g = ops::sigmoid(score) - label;
            for (gi, &ui) in grad_in.iter_mut().zip(u) {
                *gi += g * ui;
            }
            outputs.push((row, v.iter().map(|&vi| g * vi).collect()));
        }
        SampleGrad {
            loss,
            input: grad_in,
            outputs,
        }
    }

    /// One SGD step on `s`; returns the loss before the step.
    pub fn step(&mut self, s: &Sample, lr: T) -> T {
        let g = self.grad(s);
        for (row, grad) in &g.outputs {
            for (u, &d) in self.output.row_mut(*row).iter_mut().zip(grad) {
                *u -= lr * d;
            }
        }
        for (v, &d) in self.input.row_mut(s.input).iter_mut().zip(&g.input) {
            *v -= lr * d;
        }
        g.loss
    }

    /// One step that only pushes `input[row]` away from `negatives`.
    fn negative_step(&mut self, row: usize, negatives: &[usize], lr: T) {
        let v = self.input.row(row).to_vec();
        let mut grad_in = vec![T::zero(); v.len()];
        for &n in negatives {
            let u = self.output.row_mut(n);
            let g = ops::sigmoid(dot(&v, u));
            for ((gi, ui), &vi) in grad_in.iter_mut().zip(u.iter_mut()).zip(&v) {
                *gi += g * *ui;
                *ui -= lr * g * vi;
            }
        }
        for (x, d) in self.input.row_mut(row).iter_mut().zip(grad_in) {
            *x -= lr * d;
        }
    }

    pub fn mean_loss(&self, samples: &[Sample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        samples.iter().map(|s| self.loss(s).as_f64()).sum::<f64>() / samples.len() as f64
    }
}

/// Negative sampler over `count^0.75`.
pub struct NegativeSampler {
    dist: WeightedIndex<f64>,
}

impl NegativeSampler {
    pub fn new(vocab: &Vocab) -> Result<Self> {
        let weights: Vec<f64> = (0..vocab.len())
            .map(|i| if i == PAD { 0.0 } else { Float::powf(vocab.count(i) as f64, 0.75) })
            .collect();
        let dist = WeightedIndex::new(weights).map_err(|_| Error::EmptyCorpus("no token counts for negative sampling"))?;
        Ok(NegativeSampler { dist })
    }

    pub fn draw<R: Rng>(&self, n: usize, exclude: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        let mut tries = 0;
        while out.len() < n && tries < 100 * n.max(1) {
            let w = self.dist.sample(rng);
            tries += 1;
            if w != exclude {
                out.push(w);
            }
        }
        out
    }
}

fn sentences(threads: &[Thread]) -> Vec<&[usize]> {
    threads
        .iter()
        .flat_map(|t| t.comments.iter().map(|c| c.tokens.as_slice()))
        .collect()
}

/// All `(center, context)` pairs within `window` of each other.
fn pairs(tokens: &[usize], window: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..tokens.len()).flat_map(move |i| {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(tokens.len());
        (lo..hi).filter(move |&j| j != i).map(move |j| (tokens[i], tokens[j]))
    })
}

fn decayed(lr: f64, done: usize, total: usize) -> f64 {
    lr * (1.0 - done as f64 / total.max(1) as f64).max(1e-4)
}

/// Skip-gram word vectors, `vocab.len() x dim`, PAD row zero.
pub fn train_word_embeddings(threads: &[Thread], vocab: &Vocab, config: &EmbedConfig) -> Result<Tensor<f32>> {
    train_word_embeddings_with(threads, vocab, config, |_, _| {})
}

/// As [`train_word_embeddings`], calling `on_epoch(epoch, model)` after each
/// epoch.
pub fn train_word_embeddings_with<F>(
    threads: &[Thread],
    vocab: &Vocab,
    config: &EmbedConfig,
    mut on_epoch: F,
) -> Result<Tensor<f32>>
where
    F: FnMut(usize, &SkipGram<f32>),
{
    config.validate()?;
    let sents = sentences(threads);
    let tokens: usize = sents.iter().map(|s| s.len()).sum();
    if tokens <= config.window {
        return Err(Error::CorpusTooSmall(format!(
            "{tokens} tokens for a window of {}",
            config.window
        )));
    }
    let sampler = NegativeSampler::new(vocab)?;
    let mut rng = seeded(config.seed, 1);
    let mut model = SkipGram::<f32>::new(vocab.len(), vocab.len(), config.dim, &mut rng);
    let per_epoch: usize = sents.iter().map(|s| pairs(s, config.window).count()).sum();
    let total = per_epoch * config.epochs;
    let mut done = 0;
    for epoch in 0..config.epochs {
        for s in &sents {
            for (center, context) in pairs(s, config.window) {
                let negatives = sampler.draw(config.negatives, context, &mut rng);
                let lr = decayed(config.lr, done, total) as f32;
                model.step(
                    &Sample {
                        input: center,
                        output: context,
                        negatives,
                    },
                    lr,
                );
                done += 1;
            }
        }
        model.input.row_mut(PAD).fill(0.0);
        on_epoch(epoch, &model);
    }
    Ok(model.input)
}

/// Paragraph vectors keyed by `(thread_id, comment_id)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CommentEmbeddings {
    pub keys: Vec<(String, String)>,
    pub vectors: Tensor<f32>,
    index: BTreeMap<(String, String), usize>,
}

impl CommentEmbeddings {
    pub fn new(keys: Vec<(String, String)>, vectors: Tensor<f32>) -> Result<Self> {
        if keys.len() != vectors.rows() {
            return Err(Error::shape(
                "CommentEmbeddings::new",
                format!("{} keys for {} rows", keys.len(), vectors.rows()),
            ));
        }
        let index = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        Ok(CommentEmbeddings { keys, vectors, index })
    }

    pub fn get(&self, thread_id: &str, comment_id: &str) -> Option<&[f32]> {
        self.index
            .get(&(String::from(thread_id), String::from(comment_id)))
            .map(|&i| self.vectors.row(i))
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }
}

/// PV-DBOW: each comment's vector predicts the comment's words against
/// sampled negatives. Empty comments receive negative-only updates.
pub fn train_comment_embeddings(threads: &[Thread], vocab: &Vocab, config: &EmbedConfig) -> Result<CommentEmbeddings> {
    config.validate()?;
    let keys: Vec<(String, String)> = threads
        .iter()
        .flat_map(|t| t.comments.iter().map(move |c| (t.id.clone(), c.id.clone())))
        .collect();
    if keys.is_empty() {
        return Err(Error::EmptyCorpus("no comments to embed"));
    }
    let docs = sentences(threads);
    let sampler = NegativeSampler::new(vocab)?;
    let mut rng: ChaRng = seeded(config.seed, 2);
    let mut model = SkipGram::<f32>::new(keys.len(), vocab.len(), config.dim, &mut rng);
    let per_epoch: usize = docs.iter().map(|d| d.len().max(1)).sum();
    let total = per_epoch * config.epochs;
    let mut done = 0;
    for _ in 0..config.epochs {
        for (row, doc) in docs.iter().enumerate() {
            let lr = decayed(config.lr, done, total) as f32;
            if doc.is_empty() {
                let negatives = sampler.draw(config.negatives, PAD, &mut rng);
                model.negative_step(row, &negatives, lr);
                done += 1;
                continue;
            }
            for &w in doc.iter() {
                let negatives = sampler.draw(config.negatives, w, &mut rng);
                let lr = decayed(config.lr, done, total) as f32;
                model.step(
                    &Sample {
                        input: row,
                        output: w,
                        negatives,
                    },
                    lr,
                );
                done += 1;
            }
        }
    }
    CommentEmbeddings::new(keys, model.input)
}

/// Cosine similarity of two rows.
pub fn cosine<T: Real>(m: &Tensor<T>, a: usize, b: usize) -> f64 {
    let (x, y) = (m.row(a), m.row(b));
    let d = dot(x, y).as_f64();
    let n = Float::sqrt(dot(x, x).as_f64() * dot(y, y).as_f64());
    if n == 0.0 {
        0.0
    } else {
        d / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, index_threads, Comment};
    use alloc::string::ToString;

    /// Ten topics of four words; words of a topic always co-occur and never
    /// meet words of another topic.
    fn corpus() -> (Vec<Thread>, Vocab) {
        let mut threads = Vec::new();
        for i in 0..40 {
            let g = i % 10;
            let body: Vec<String> = (0..12).map(|j| format!("w{g}x{}", (j * 3 + i) % 4)).collect();
            let id = format!("t{i}");
            let root = Comment::new("c", None, &body.join(" "));
            threads.push(Thread::build(&id, "", vec![root, Comment::new("d", Some("c"), "")]).unwrap().thread);
        }
        let vocab = build_vocab(&threads, 1).unwrap();
        index_threads(&mut threads, &vocab);
        (threads, vocab)
    }

    fn small() -> EmbedConfig {
        EmbedConfig {
            dim: 8,
            ..EmbedConfig::words()
        }
    }

    #[test]
    fn cooccurring_words_are_closer() {
        let (threads, vocab) = corpus();
        let m = train_word_embeddings(&threads, &vocab, &small()).unwrap();
        assert_eq!(m.shape(), (vocab.len(), 8));
        assert!(m.row(PAD).iter().all(|&x| x == 0.0));
        let (p, q, r) = (vocab.lookup("w0x0"), vocab.lookup("w0x1"), vocab.lookup("w1x0"));
        assert!(cosine(&m, p, q) > cosine(&m, p, r));
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let (threads, vocab) = corpus();
        let a = train_word_embeddings(&threads, &vocab, &small()).unwrap();
        let b = train_word_embeddings(&threads, &vocab, &small()).unwrap();
        assert_eq!(a, b);
        let mut other = small();
        other.seed = 2;
        assert_ne!(a, train_word_embeddings(&threads, &vocab, &other).unwrap());
    }

    #[test]
    fn tiny_corpus_is_rejected() {
        let mut threads = vec![Thread::build("t", "", vec![Comment::new("c", None, "a b")]).unwrap().thread];
        let vocab = build_vocab(&threads, 1).unwrap();
        index_threads(&mut threads, &vocab);
        assert!(matches!(
            train_word_embeddings(&threads, &vocab, &small()),
            Err(Error::CorpusTooSmall(_))
        ));
    }

    #[test]
    fn frozen_minibatch_loss_decreases() {
        let (threads, vocab) = corpus();
        let sampler = NegativeSampler::new(&vocab).unwrap();
        let mut rng = seeded(9, 0);
        let frozen: Vec<Sample> = pairs(&threads[0].comments[0].tokens, 5)
            .chain(pairs(&threads[1].comments[0].tokens, 5))
            .map(|(c, o)| Sample {
                input: c,
                output: o,
                negatives: sampler.draw(5, o, &mut rng),
            })
            .collect();
        let mut losses = Vec::new();
        train_word_embeddings_with(&threads, &vocab, &small(), |_, m| losses.push(m.mean_loss(&frozen))).unwrap();
        assert_eq!(losses.len(), 5);
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn sample_gradient_matches_central_differences() {
        let mut rng = seeded(3, 0);
        let mut m = SkipGram::<f64>::new(6, 6, 4, &mut rng);
        m.output = Tensor::from_fn(6, 4, |r, c| ((r * 4 + c) as f64 * 0.61).sin() * 0.8);
        m.input = Tensor::from_fn(6, 4, |r, c| ((r * 4 + c) as f64 * 0.37).cos() * 0.7);
        let s = Sample {
            input: 2,
            output: 3,
            negatives: vec![4, 5, 4],
        };
        let g = m.grad(&s);
        assert!((g.loss - m.loss(&s)).abs() < 1e-12);
        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        for j in 0..4 {
            let mut plus = m.input.row(2).to_vec();
            let mut minus = plus.clone();
            plus[j] += eps;
            minus[j] -= eps;
            let numeric = (m.loss_with(&plus, &s) - m.loss_with(&minus, &s)) / (2.0 * eps);
            let rel = (numeric - g.input[j]).abs() / numeric.abs().max(g.input[j].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        // output row 4 appears twice; its gradient is the sum of both entries
        let mut analytic_u4 = [0.0; 4];
        for (row, d) in &g.outputs {
            if *row == 4 {
                for (a, x) in analytic_u4.iter_mut().zip(d) {
                    *a += x;
                }
            }
        }
        for j in 0..4 {
            let base = m.output.get(4, j);
            let mut probe = m.clone();
            probe.output.set(4, j, base + eps);
            let up = probe.loss(&s);
            probe.output.set(4, j, base - eps);
            let down = probe.loss(&s);
            let numeric = (up - down) / (2.0 * eps);
            let rel = (numeric - analytic_u4[j]).abs() / numeric.abs().max(analytic_u4[j].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "{worst}");
    }

    #[test]
    fn comment_vectors_cover_every_comment() {
        let (threads, vocab) = corpus();
        let cfg = EmbedConfig {
            dim: 12,
            ..EmbedConfig::comments()
        };
        let emb = train_comment_embeddings(&threads, &vocab, &cfg).unwrap();
        assert_eq!(emb.len(), 80);
        assert_eq!(emb.dim(), 12);
        assert!(emb.vectors.is_finite());
        // the reply bodies are empty but still get a vector
        let empty = emb.get("t0", "d").unwrap();
        assert!(empty.iter().all(|x| x.is_finite()));
        assert_eq!(emb, train_comment_embeddings(&threads, &vocab, &cfg).unwrap());
        assert!(emb.get("t0", "missing").is_none());
        assert_eq!(EmbedConfig::comments().dim, 700);
        let _ = "x".to_string();
    }
}
