use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{tokenize, Thread};
use crate::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ index map. Index 0 is padding, 1 is the unknown token; the rest
/// are ordered by descending corpus count, ties broken lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    index: BTreeMap<String, usize>,
    tokens: Vec<String>,
    counts: Vec<u64>,
}

impl Vocab {
    /// Vocabulary from `(token, count)` pairs already in index order,
    /// starting at index 2.
    pub fn from_entries(entries: Vec<(String, u64)>, unk_count: u64) -> Result<Self> {
        let mut v = Vocab {
            index: BTreeMap::new(),
            tokens: alloc::vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
            counts: alloc::vec![0, unk_count],
        };
        for (tok, count) in entries {
            if v.index.contains_key(&tok) || tok == PAD_TOKEN || tok == UNK_TOKEN {
                return Err(Error::InvalidArgument(alloc::format!("duplicate token `{tok}`")));
            }
            v.index.insert(tok.clone(), v.tokens.len());
            v.tokens.push(tok);
            v.counts.push(count);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of `token`, or [`UNK`].
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.lookup(t.as_ref())).collect()
    }

    /// `(token, index, count)` for every slot including the reserved ones.
    pub fn entries(&self) -> impl Iterator<Item = (&str, usize, u64)> {
        self.tokens
            .iter()
            .zip(&self.counts)
            .enumerate()
            .map(|(i, (t, &c))| (t.as_str(), i, c))
    }
}

/// Counts tokens over every comment text and keeps those seen at least
/// `min_count` times.
pub fn build_vocab(threads: &[Thread], min_count: u64) -> Result<Vocab> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0u64;
    for t in threads {
        for i in 0..t.comments.len() {
            for tok in tokenize(&t.text(i)) {
                *counts.entry(tok).or_insert(0) += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyCorpus("no tokens in any comment"));
    }
    let mut unk = 0;
    let mut kept: Vec<(String, u64)> = Vec::new();
    for (tok, c) in counts {
        if c >= min_count.max(1) && tok != PAD_TOKEN && tok != UNK_TOKEN {
            kept.push((tok, c));
        } else {
            unk += c;
        }
    }
    // BTreeMap iteration is lexicographic, so a stable sort on count keeps ties ordered.
    kept.sort_by_key(|e| core::cmp::Reverse(e.1));
    Vocab::from_entries(kept, unk)
}

/// Fills `Comment::tokens` from each comment's text.
pub fn index_threads(threads: &mut [Thread], vocab: &Vocab) {
    for t in threads.iter_mut() {
        for i in 0..t.comments.len() {
            let toks = vocab.encode(&tokenize(&t.text(i)));
            t.comments[i].tokens = toks;
        }
    }
}
