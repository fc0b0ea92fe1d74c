use alloc::collections::{BTreeMap, BTreeSet};

use num_traits::Float;

use super::Thread;
use crate::{Error, Result};

/// Document granularity of an [`IdfTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IdfKind {
    /// Threads are documents; weights words of the thread's first comment.
    Thread,
    /// Comments are documents; weights words of the parent comment.
    Comment,
}

impl IdfKind {
    pub fn name(self) -> &'static str {
        match self {
            IdfKind::Thread => "thread",
            IdfKind::Comment => "comment",
        }
    }
}

/// `idf(w) = ln(N / df(w))` for every token index seen in the corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct IdfTable {
    pub kind: IdfKind,
    pub document_count: usize,
    values: BTreeMap<usize, f64>,
}

impl IdfTable {
    pub fn from_values(kind: IdfKind, document_count: usize, values: BTreeMap<usize, f64>) -> Self {
        IdfTable {
            kind,
            document_count,
            values,
        }
    }

    /// Tokens never seen are irrelevant and weigh 0.
    pub fn get(&self, token: usize) -> f64 {
        self.values.get(&token).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, token: usize) -> bool {
        self.values.contains_key(&token)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().map(|(&k, &v)| (k, v))
    }
}

/// Document frequencies over indexed threads (`Comment::tokens` must be set).
pub fn compute_idf(threads: &[Thread], kind: IdfKind) -> Result<IdfTable> {
    let mut df: BTreeMap<usize, usize> = BTreeMap::new();
    let mut n = 0usize;
    match kind {
        IdfKind::Thread => {
            for t in threads {
                let seen: BTreeSet<usize> = t.comments.iter().flat_map(|c| c.tokens.iter().copied()).collect();
                for tok in seen {
                    *df.entry(tok).or_insert(0) += 1;
                }
                n += 1;
            }
        }
        IdfKind::Comment => {
            for c in threads.iter().flat_map(|t| &t.comments) {
                let seen: BTreeSet<usize> = c.tokens.iter().copied().collect();
                for tok in seen {
                    *df.entry(tok).or_insert(0) += 1;
                }
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyCorpus("no documents for idf"));
    }
    let values = df
        .into_iter()
        .map(|(tok, d)| (tok, Float::ln(n as f64 / d as f64)))
        .collect();
    Ok(IdfTable {
        kind,
        document_count: n,
        values,
    })
}
