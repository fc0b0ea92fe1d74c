//! Per-chain model inputs assembled from the corpus and pretrained features.

use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{extract_chains, Chain, ContentWordSelector, DiscourseAct, IdfTable, Thread, Vocab};
use crate::embed::CommentEmbeddings;
use crate::layers::{attention_targets, AttentionTargets};
use crate::nn::Tensor;

/// One chain with everything any architecture needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainExample {
    pub thread_id: String,
    pub comment_ids: Vec<String>,
    pub tokens: Vec<Vec<usize>>,
    pub gold: Vec<Option<DiscourseAct>>,
    /// Attention targets per comment; the root gets zero vectors.
    pub targets: Option<Vec<AttentionTargets<f32>>>,
    /// Pretrained comment vectors per comment.
    pub vectors: Option<Vec<Vec<f32>>>,
}

impl ChainExample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Sources for the optional [`ChainExample`] features.
#[derive(Clone, Copy)]
pub struct Features<'a> {
    pub vocab: &'a Vocab,
    /// Static pretrained word vectors, for attention targets.
    pub word_embeddings: Option<&'a Tensor<f32>>,
    pub thread_idf: Option<&'a IdfTable>,
    pub comment_idf: Option<&'a IdfTable>,
    pub selector: &'a dyn ContentWordSelector,
    pub comment_vectors: Option<&'a CommentEmbeddings>,
}

/// Chains of every thread, in thread order then traversal order.
pub fn chains_of(threads: &[Thread], min_len: usize) -> Vec<(usize, Chain)> {
    threads
        .iter()
        .enumerate()
        .flat_map(|(i, t)| extract_chains(t, min_len).into_iter().map(move |c| (i, c)))
        .collect()
}

pub fn build_example(thread: &Thread, chain: &Chain, features: &Features<'_>) -> ChainExample {
    let comments: Vec<_> = chain.comments.iter().map(|&i| &thread.comments[i]).collect();
    let targets = match (features.word_embeddings, features.thread_idf, features.comment_idf) {
        (Some(emb), Some(tidf), Some(cidf)) => Some(
            comments
                .iter()
                .enumerate()
                .map(|(pos, _)| {
                    if pos == 0 {
                        AttentionTargets::zeros(emb.cols())
                    } else {
                        attention_targets(comments[0], comments[pos - 1], emb, tidf, cidf, features.vocab, features.selector)
                    }
                })
                .collect(),
        ),
        _ => None,
    };
    let vectors = features.comment_vectors.map(|table| {
        comments
            .iter()
            .map(|c| {
                table.get(&thread.id, &c.id).map(<[f32]>::to_vec).unwrap_or_default()
            })
            .collect()
    });
    ChainExample {
        thread_id: thread.id.clone(),
        comment_ids: comments.iter().map(|c| c.id.clone()).collect(),
        tokens: comments.iter().map(|c| c.tokens.clone()).collect(),
        gold: comments.iter().map(|c| c.gold_act).collect(),
        targets,
        vectors,
    }
}

pub fn build_examples(threads: &[Thread], min_len: usize, features: &Features<'_>) -> Vec<ChainExample> {
    chains_of(threads, min_len)
        .into_iter()
        .map(|(t, c)| build_example(&threads[t], &c, features))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, compute_idf, index_threads, Comment, IdentitySelector, IdfKind};
    use alloc::vec;

    #[test]
    fn root_targets_are_zero_and_reply_targets_follow_parent() {
        let comments = vec![
            Comment::new("r", None, "alpha beta").with_act(DiscourseAct::Question),
            Comment::new("a", Some("r"), "gamma"),
            Comment::new("b", Some("a"), "delta"),
        ];
        let mut threads = vec![
            Thread::build("t", "", comments).unwrap().thread,
            Thread::build("u", "", vec![Comment::new("x", None, "beta")]).unwrap().thread,
        ];
        let vocab = build_vocab(&threads, 1).unwrap();
        index_threads(&mut threads, &vocab);
        let tidf = compute_idf(&threads, IdfKind::Thread).unwrap();
        let cidf = compute_idf(&threads, IdfKind::Comment).unwrap();
        let emb = Tensor::from_fn(vocab.len(), 2, |r, c| (r + c) as f32);
        let features = Features {
            vocab: &vocab,
            word_embeddings: Some(&emb),
            thread_idf: Some(&tidf),
            comment_idf: Some(&cidf),
            selector: &IdentitySelector,
            comment_vectors: None,
        };
        let ex = build_examples(&threads, 2, &features);
        assert_eq!(ex.len(), 1);
        let e = &ex[0];
        assert_eq!(e.comment_ids, ["r", "a", "b"]);
        assert_eq!(e.gold[0], Some(DiscourseAct::Question));
        let t = e.targets.as_ref().unwrap();
        assert_eq!(t[0], AttentionTargets::zeros(2));
        let gamma = vocab.get("gamma").unwrap();
        let w = cidf.get(gamma) as f32;
        let expect: Vec<f32> = emb.row(gamma).iter().map(|x| x * w).collect();
        assert_eq!(t[2].parent, expect);
        assert!(e.vectors.is_none());
    }
}
