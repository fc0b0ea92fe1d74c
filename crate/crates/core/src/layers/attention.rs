//! Word-relevance attention.
//!
//! Each word of the current comment is augmented with two target vectors
//! summarising the thread's first comment and the parent comment. A
//! position-specific weight row of `K` scores every augmented word, the
//! scores are softmaxed over the comment's real positions, and the resulting
//! relevance scales the word-level LSTM outputs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::corpus::{Comment, ContentWordSelector, IdfTable, Vocab};
use crate::nn::{init, Binding, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::{Error, Result};

/// Target vectors for one comment: first-comment summary and parent-comment
/// summary, each of word dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTargets<T> {
    pub first: Vec<T>,
    pub parent: Vec<T>,
}

impl<T: Real> AttentionTargets<T> {
    pub fn zeros(dim: usize) -> Self {
        AttentionTargets {
            first: vec![T::zero(); dim],
            parent: vec![T::zero(); dim],
        }
    }
}

/// `Σ_i w_i · tf(w_i) · idf(w_i) / M` over the `M` content words of `tokens`,
/// where `tf` is the raw count in `tokens`. Zero when nothing is selected.
pub fn target_vector<T: Real>(
    tokens: &[usize],
    embeddings: &Tensor<T>,
    idf: &IdfTable,
    vocab: &Vocab,
    selector: &dyn ContentWordSelector,
) -> Vec<T> {
    let dim = embeddings.cols();
    let mut out = vec![T::zero(); dim];
    let selected = selector.select(tokens, vocab);
    if selected.is_empty() {
        return out;
    }
    let mut tf: BTreeMap<usize, usize> = BTreeMap::new();
    for &t in tokens {
        *tf.entry(t).or_insert(0) += 1;
    }
    for &w in &selected {
        let weight = T::lit(tf[&w] as f64 * idf.get(w));
        for (o, &e) in out.iter_mut().zip(embeddings.row(w)) {
            *o += weight * e;
        }
    }
    let m = T::lit(selected.len() as f64);
    for o in &mut out {
        *o = *o / m;
    }
    out
}

/// Targets of a reply: thread-idf weighted summary of `first`, comment-idf
/// weighted summary of `parent`. `embeddings` are the static pretrained
/// vectors; targets carry no gradient.
pub fn attention_targets<T: Real>(
    first: &Comment,
    parent: &Comment,
    embeddings: &Tensor<T>,
    thread_idf: &IdfTable,
    comment_idf: &IdfTable,
    vocab: &Vocab,
    selector: &dyn ContentWordSelector,
) -> AttentionTargets<T> {
    AttentionTargets {
        first: target_vector(&first.tokens, embeddings, thread_idf, vocab, selector),
        parent: target_vector(&parent.tokens, embeddings, comment_idf, vocab, selector),
    }
}

/// Trainable scoring matrix `K` of shape `c_max x 3·word_dim`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    pub k: ParamId,
    pub c_max: usize,
    pub word_dim: usize,
}

impl AttentionParams {
    pub fn register<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        c_max: usize,
        word_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let k = store.add(name, init::glorot(c_max, 3 * word_dim, rng))?;
        Ok(AttentionParams { k, c_max, word_dim })
    }
}

/// Relevance `P` (`rows x C`) of the `C = words.len()` positions:
/// `s_i = Σ_j K[i][j] · T_i[j]` with `T_i = [word_i, first, parent]`, then a
/// softmax over each row's real positions.
pub fn relevance_distribution<T: Real>(
    tape: &mut Tape<T>,
    b: &Binding,
    attn: &AttentionParams,
    words: &[Var],
    first: Var,
    parent: Var,
    mask: &[Vec<bool>],
) -> Result<Var> {
    if words.len() > attn.c_max {
        return Err(Error::BucketMismatch {
            len: words.len(),
            c_max: attn.c_max,
        });
    }
    if mask.len() != words.len() || words.is_empty() {
        return Err(Error::shape(
            "relevance_distribution",
            format!("{} mask positions for {} words", mask.len(), words.len()),
        ));
    }
    let rows = tape.value(words[0]).rows();
    let mut scores = Vec::with_capacity(words.len());
    for (i, &w) in words.iter().enumerate() {
        let augmented = tape.concat_cols(&[w, first, parent]);
        let k_row = tape.row(b[attn.k], i);
        scores.push(tape.row_dot(augmented, k_row));
    }
    let s = tape.concat_cols(&scores);
    let mut flat = Vec::with_capacity(rows * words.len());
    for r in 0..rows {
        for m in mask {
            flat.push(m[r]);
        }
    }
    Ok(tape.softmax_rows(s, Some(&flat)))
}

/// `out[i] = p_i · seq[i]` row by row.
pub fn apply_relevance<T: Real>(tape: &mut Tape<T>, p: Var, seq: &[Var]) -> Result<Vec<Var>> {
    let positions = tape.value(p).cols();
    if positions != seq.len() {
        return Err(Error::shape(
            "apply_relevance",
            format!("{} relevance positions for {} vectors", positions, seq.len()),
        ));
    }
    Ok(seq
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let col = tape.col(p, i);
            tape.scale_rows(w, col)
        })
        .collect())
}
