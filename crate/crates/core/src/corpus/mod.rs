//! Discussion threads, their reply trees, chains and token statistics.

mod idf;
mod select;
mod tokenize;
mod vocab;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use idf::{compute_idf, IdfKind, IdfTable};
pub use select::{select_content_words, ContentWordSelector, HeuristicSelector, IdentitySelector, STOPWORDS};
pub use tokenize::tokenize;
pub use vocab::{build_vocab, index_threads, Vocab, PAD, UNK};

use crate::{Error, Result};

/// Pragmatic role of a comment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DiscourseAct {
    Question,
    Answer,
    Announcement,
    Elaboration,
    Agreement,
    Disagreement,
    Humor,
    Appreciation,
    NegativeReaction,
    Other,
}

impl DiscourseAct {
    pub const COUNT: usize = 10;

    pub const ALL: [DiscourseAct; 10] = [
        DiscourseAct::Question,
        DiscourseAct::Answer,
        DiscourseAct::Announcement,
        DiscourseAct::Elaboration,
        DiscourseAct::Agreement,
        DiscourseAct::Disagreement,
        DiscourseAct::Humor,
        DiscourseAct::Appreciation,
        DiscourseAct::NegativeReaction,
        DiscourseAct::Other,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DiscourseAct::Question => "question",
            DiscourseAct::Answer => "answer",
            DiscourseAct::Announcement => "announcement",
            DiscourseAct::Elaboration => "elaboration",
            DiscourseAct::Agreement => "agreement",
            DiscourseAct::Disagreement => "disagreement",
            DiscourseAct::Humor => "humor",
            DiscourseAct::Appreciation => "appreciation",
            DiscourseAct::NegativeReaction => "negativereaction",
            DiscourseAct::Other => "other",
        }
    }

    /// Acts that make up argumentative discourse.
    pub fn is_argumentative(self) -> bool {
        matches!(
            self,
            DiscourseAct::Agreement
                | DiscourseAct::Disagreement
                | DiscourseAct::Humor
                | DiscourseAct::Appreciation
                | DiscourseAct::NegativeReaction
        )
    }
}

impl fmt::Display for DiscourseAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiscourseAct {
    type Err = Error;

    /// Case-insensitive; underscores, dashes and spaces are ignored so that
    /// `negative_reaction` and `Negative Reaction` both parse.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | '-' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.name() == key)
            .ok_or_else(|| Error::UnknownAct(String::from(s)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comment {
    pub id: String,
    pub parent_id: Option<String>,
    pub author: String,
    pub timestamp: Option<i64>,
    pub body: String,
    /// Vocabulary indices, filled by [`index_threads`].
    pub tokens: Vec<usize>,
    pub gold_act: Option<DiscourseAct>,
}

impl Comment {
    pub fn new(id: &str, parent_id: Option<&str>, body: &str) -> Self {
        Comment {
            id: id.into(),
            parent_id: parent_id.map(Into::into),
            author: String::new(),
            timestamp: None,
            body: body.into(),
            tokens: Vec::new(),
            gold_act: None,
        }
    }

    pub fn with_act(mut self, act: DiscourseAct) -> Self {
        self.gold_act = Some(act);
        self
    }

    pub fn with_author(mut self, author: &str) -> Self {
        self.author = author.into();
        self
    }

    pub fn with_timestamp(mut self, ts: i64) -> Self {
        self.timestamp = Some(ts);
        self
    }

    pub fn is_root(&self) -> bool {
        self.parent_id.is_none()
    }
}

/// A discussion: comments forming a tree under a single root.
#[derive(Clone, Debug, PartialEq)]
pub struct Thread {
    pub id: String,
    pub title: String,
    /// Root first, remaining comments in input order.
    pub comments: Vec<Comment>,
}

/// Result of [`Thread::build`].
#[derive(Clone, Debug, PartialEq)]
pub struct BuiltThread {
    pub thread: Thread,
    /// Comments removed because their parent chain does not reach the root
    /// (unknown parent, cycle, duplicate id, or a second root).
    pub dropped: usize,
}

impl Thread {
    /// Validates the reply structure. The first parentless comment is the
    /// root; every comment whose ancestry does not resolve to it is dropped.
    pub fn build(id: &str, title: &str, comments: Vec<Comment>) -> Result<BuiltThread> {
        let root = comments
            .iter()
            .position(Comment::is_root)
            .ok_or_else(|| Error::InvalidThread {
                thread: id.into(),
                reason: "no root comment".into(),
            })?;
        let mut by_id: BTreeMap<&str, usize> = BTreeMap::new();
        let mut duplicate = vec![false; comments.len()];
        for (i, c) in comments.iter().enumerate() {
            if by_id.contains_key(c.id.as_str()) {
                duplicate[i] = true;
            } else {
                by_id.insert(c.id.as_str(), i);
            }
        }
        // 0 = unknown, 1 = reaches root, 2 = does not
        let mut state = vec![0u8; comments.len()];
        state[root] = 1;
        for (i, d) in duplicate.iter().enumerate() {
            if *d {
                state[i] = 2;
            }
        }
        for start in 0..comments.len() {
            if state[start] != 0 {
                continue;
            }
            let mut path = Vec::new();
            let mut cur = start;
            let verdict = loop {
                if state[cur] != 0 {
                    break state[cur];
                }
                if path.contains(&cur) {
                    break 2;
                }
                path.push(cur);
                match comments[cur].parent_id.as_deref().and_then(|p| by_id.get(p)) {
                    Some(&p) => cur = p,
                    None => break 2,
                }
            };
            for p in path {
                state[p] = verdict;
            }
        }
        let dropped = state.iter().filter(|&&s| s != 1).count();
        let mut kept: Vec<Comment> = Vec::with_capacity(comments.len() - dropped);
        let mut root_comment = None;
        for (i, c) in comments.into_iter().enumerate() {
            if i == root {
                root_comment = Some(c);
            } else if state[i] == 1 {
                kept.push(c);
            }
        }
        kept.insert(0, root_comment.expect("root retained"));
        Ok(BuiltThread {
            thread: Thread {
                id: id.into(),
                title: title.into(),
                comments: kept,
            },
            dropped,
        })
    }

    pub fn root(&self) -> &Comment {
        &self.comments[0]
    }

    /// Text used for comment `i`: the thread title is prepended to the root.
    pub fn text(&self, i: usize) -> String {
        if i == 0 && !self.title.is_empty() {
            format!("{} {}", self.title, self.comments[0].body)
        } else {
            self.comments[i].body.clone()
        }
    }

    /// Child indices of every comment, in input order.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let index: BTreeMap<&str, usize> = self
            .comments
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.as_str(), i))
            .collect();
        let mut children = vec![Vec::new(); self.comments.len()];
        for (i, c) in self.comments.iter().enumerate() {
            if let Some(p) = c.parent_id.as_deref().and_then(|p| index.get(p)) {
                children[*p].push(i);
            }
        }
        children
    }

    pub fn position(&self, comment_id: &str) -> Option<usize> {
        self.comments.iter().position(|c| c.id == comment_id)
    }
}

/// Root-to-leaf path through a thread, as indices into `Thread::comments`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Chain {
    pub thread_id: String,
    pub comments: Vec<usize>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }
}

/// Every root-to-leaf path of at least `min_len` comments, in depth-first
/// order with siblings visited in input order.
pub fn extract_chains(thread: &Thread, min_len: usize) -> Vec<Chain> {
    let children = thread.children();
    let mut chains = Vec::new();
    if thread.comments.is_empty() {
        return chains;
    }
    // (node, next child to visit)
    let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
    let mut path: Vec<usize> = vec![0];
    while let Some(&mut (node, ref mut next)) = stack.last_mut() {
        let kids = &children[node];
        if kids.is_empty() && *next == 0 && path.len() >= min_len {
            chains.push(Chain {
                thread_id: thread.id.clone(),
                comments: path.clone(),
            });
        }
        if *next < kids.len() {
            let child = kids[*next];
            *next += 1;
            stack.push((child, 0));
            path.push(child);
        } else {
            stack.pop();
            path.pop();
        }
    }
    chains
}
