//! Word-relevance dumps, discourse fractions over time, and signed user
//! graphs split into two antagonistic groups.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::corpus::{DiscourseAct, Thread, Vocab};
use crate::dataset::ChainExample;
use crate::eval::tag;
use crate::nn::Real;
use crate::rng::seeded;
use crate::train::BucketModel;
use crate::{Error, Result};

/// Relevance of one comment's words within one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct RelevanceRecord {
    pub thread_id: String,
    pub comment_id: String,
    /// Position of the comment in its chain.
    pub position: usize,
    pub tokens: Vec<String>,
    pub relevance: Vec<f32>,
    pub pred: DiscourseAct,
}

/// Relevance records of every comment of every chain, in chain order.
pub fn dump_relevance<T: Real>(
    models: &[BucketModel<T>],
    chains: &[&ChainExample],
    vocab: &Vocab,
    batch_size: usize,
) -> Result<Vec<RelevanceRecord>> {
    if let Some(m) = models.iter().find(|m| !m.model.arch().uses_attention()) {
        return Err(Error::InvalidArgument(alloc::format!("{} has no attention", m.model.arch())));
    }
    let mut out = Vec::new();
    for p in tag(models, chains, batch_size)? {
        let rel = p.relevance.expect("attention model");
        for (pos, (toks, r)) in p.tokens.iter().zip(rel).enumerate() {
            out.push(RelevanceRecord {
                thread_id: p.thread_id.clone(),
                comment_id: p.comment_ids[pos].clone(),
                position: pos,
                tokens: toks.iter().map(|&t| String::from(vocab.token(t))).collect(),
                relevance: r,
                pred: p.pred[pos],
            });
        }
    }
    Ok(out)
}

/// Per-window act fractions, windows ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscourseSeries {
    pub window: i64,
    /// `(window_start, fraction per act code)`, empty windows omitted.
    pub windows: Vec<(i64, [f64; DiscourseAct::COUNT])>,
    /// Comments without a timestamp.
    pub skipped: usize,
}

pub const DAY: i64 = 86_400;

/// Fractions of each act among comments in windows of `window` seconds
/// aligned to multiples of `window`.
pub fn temporal_fractions(comments: &[(Option<i64>, DiscourseAct)], window: i64) -> Result<DiscourseSeries> {
    if window <= 0 {
        return Err(Error::InvalidArgument(alloc::format!("window of {window} s")));
    }
    let mut counts: BTreeMap<i64, [usize; DiscourseAct::COUNT]> = BTreeMap::new();
    let mut skipped = 0;
    for &(ts, act) in comments {
        match ts {
            Some(ts) => counts.entry(ts.div_euclid(window) * window).or_default()[act.code()] += 1,
            None => skipped += 1,
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus("timestamped comments"));
    }
    let windows = counts
        .into_iter()
        .map(|(start, c)| {
            let n: usize = c.iter().sum();
            let mut f = [0.0; DiscourseAct::COUNT];
            for (dst, &k) in f.iter_mut().zip(&c) {
                *dst = k as f64 / n as f64;
            }
            (start, f)
        })
        .collect();
    Ok(DiscourseSeries {
        window,
        windows,
        skipped,
    })
}

/// `(timestamp, act)` of every comment, with acts from `acts` keyed by
/// `(thread_id, comment_id)` and falling back to the gold act.
pub fn timestamped_acts(threads: &[Thread], acts: &BTreeMap<(String, String), DiscourseAct>) -> Vec<(Option<i64>, DiscourseAct)> {
    threads
        .iter()
        .flat_map(|t| {
            t.comments.iter().filter_map(move |c| {
                acts.get(&(t.id.clone(), c.id.clone()))
                    .copied()
                    .or(c.gold_act)
                    .map(|a| (c.timestamp, a))
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Sign {
    Positive,
    Negative,
}

/// Which acts make edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeRules {
    pub humor_negative: bool,
}

impl Default for EdgeRules {
    fn default() -> Self {
        EdgeRules { humor_negative: true }
    }
}

impl EdgeRules {
    pub fn sign(&self, act: DiscourseAct) -> Option<Sign> {
        use DiscourseAct::*;
        match act {
            Agreement | Appreciation => Some(Sign::Positive),
            Disagreement | NegativeReaction => Some(Sign::Negative),
            Humor if self.humor_negative => Some(Sign::Negative),
            _ => None,
        }
    }
}

/// Undirected signed multigraph over users. A pair may carry both a
/// positive and a negative edge.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SignedUserGraph {
    pub users: Vec<String>,
    /// `(u, v, sign) -> count` with `u < v`.
    pub edges: BTreeMap<(usize, usize, Sign), u64>,
}

impl SignedUserGraph {
    pub fn new(users: Vec<String>) -> Self {
        SignedUserGraph {
            users,
            edges: BTreeMap::new(),
        }
    }

    /// Adds one interaction; self-loops are ignored.
    pub fn add(&mut self, u: usize, v: usize, sign: Sign) {
        if u != v {
            *self.edges.entry((u.min(v), u.max(v), sign)).or_insert(0) += 1;
        }
    }

    /// Edges from replies between distinct named authors, using `acts` for the
    /// replying comment's act and falling back to gold.
    pub fn from_threads(
        threads: &[Thread],
        acts: &BTreeMap<(String, String), DiscourseAct>,
        rules: EdgeRules,
    ) -> Self {
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut pending = Vec::new();
        for t in threads {
            for c in &t.comments {
                let Some(parent) = &c.parent_id else { continue };
                let Some(p) = t.position(parent).map(|i| &t.comments[i].author) else { continue };
                if c.author.is_empty() || p.is_empty() {
                    continue;
                }
                let author = &c.author;
                let act = acts.get(&(t.id.clone(), c.id.clone())).copied().or(c.gold_act);
                let Some(sign) = act.and_then(|a| rules.sign(a)) else { continue };
                pending.push((author.clone(), p.clone(), sign));
            }
        }
        for (a, b, _) in &pending {
            index.entry(a.clone()).or_insert(0);
            index.entry(b.clone()).or_insert(0);
        }
        for (i, v) in index.values_mut().enumerate() {
            *v = i;
        }
        let mut g = SignedUserGraph::new(index.keys().cloned().collect());
        for (a, b, sign) in pending {
            g.add(index[&a], index[&b], sign);
        }
        g
    }

    /// Total weight of negative edges inside a group and positive edges
    /// across groups.
    pub fn frustration(&self, side: &[bool]) -> u64 {
        self.edges
            .iter()
            .filter(|(&(u, v, s), _)| (side[u] == side[v]) == (s == Sign::Negative))
            .map(|(_, &w)| w)
            .sum()
    }

    fn adjacency(&self) -> Vec<Vec<(usize, i64)>> {
        let mut adj = vec![Vec::new(); self.users.len()];
        for (&(u, v, s), &w) in &self.edges {
            let w = w as i64 * if s == Sign::Positive { 1 } else { -1 };
            adj[u].push((v, w));
            adj[v].push((u, w));
        }
        adj
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionMethod {
    Exact,
    Heuristic,
}

impl PartitionMethod {
    pub fn name(self) -> &'static str {
        match self {
            PartitionMethod::Exact => "exact",
            PartitionMethod::Heuristic => "heuristic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    /// `side[u]`: user `u` is in group b. User 0 is always in group a.
    pub side: Vec<bool>,
    pub frustration: u64,
    pub method: PartitionMethod,
}

impl Partition {
    pub fn groups<'a>(&self, users: &'a [String]) -> (Vec<&'a str>, Vec<&'a str>) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (u, name) in users.iter().enumerate() {
            if self.side[u] { b.push(name.as_str()) } else { a.push(name.as_str()) }
        }
        (a, b)
    }
}

pub const EXACT_LIMIT: usize = 20;

/// Minimum-frustration two-way split: exhaustive up to [`EXACT_LIMIT`]
/// users, local search beyond.
pub fn partition_users(graph: &SignedUserGraph, seed: u64) -> Result<Partition> {
    if graph.users.len() < 2 || graph.edges.is_empty() {
        return Err(Error::EmptyCorpus("signed user graph"));
    }
    Ok(if graph.users.len() <= EXACT_LIMIT {
        partition_exact(graph)
    } else {
        partition_heuristic(graph, 10, seed)
    })
}

/// Gray-code enumeration of every split with user 0 fixed in group a.
pub fn partition_exact(graph: &SignedUserGraph) -> Partition {
    let n = graph.users.len();
    let adj = graph.adjacency();
    let mut side = vec![false; n];
    let mut cur = graph.frustration(&side) as i64;
    let (mut best, mut best_side) = (cur, side.clone());
    let free = n.saturating_sub(1);
    for step in 1u64..(1u64 << free) {
        let u = 1 + step.trailing_zeros() as usize;
        cur += flip_delta(&adj, &side, u);
        side[u] = !side[u];
        if cur < best {
            best = cur;
            best_side.clone_from(&side);
        }
    }
    Partition {
        side: best_side,
        frustration: best as u64,
        method: PartitionMethod::Exact,
    }
}

/// Change in frustration from moving `u` to the other group.
fn flip_delta(adj: &[Vec<(usize, i64)>], side: &[bool], u: usize) -> i64 {
    adj[u]
        .iter()
        .map(|&(v, w)| {
            // Same side: a positive edge becomes cut (+w); a negative edge
            // leaves the group (-|w|). Otherwise the reverse.
            if side[u] == side[v] { w } else { -w }
        })
        .sum()
}

/// Greedy local search from `starts` random splits, keeping the best. Each
/// start applies improving single flips, then improving pair flips, until
/// neither improves.
pub fn partition_heuristic(graph: &SignedUserGraph, starts: usize, seed: u64) -> Partition {
    let n = graph.users.len();
    let adj = graph.adjacency();
    let weight = |u: usize, v: usize| adj[u].iter().filter(|&&(x, _)| x == v).map(|&(_, w)| w).sum::<i64>();
    let mut rng = seeded(seed, 20);
    let mut best: Option<(i64, Vec<bool>)> = None;
    for _ in 0..starts.max(1) {
        let mut side: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let mut cur = graph.frustration(&side) as i64;
        loop {
            let mv = (0..n)
                .map(|u| (flip_delta(&adj, &side, u), u))
                .min()
                .filter(|&(d, _)| d < 0);
            if let Some((d, u)) = mv {
                side[u] = !side[u];
                cur += d;
                continue;
            }
            let mut pair = None;
            for u in 0..n {
                for v in u + 1..n {
                    // Flipping both: the u-v edge keeps its state, so undo
                    // its contribution to both single deltas.
                    let w = weight(u, v);
                    let inner = if side[u] == side[v] { w } else { -w };
                    let d = flip_delta(&adj, &side, u) + flip_delta(&adj, &side, v) - 2 * inner;
                    if d < 0 && pair.is_none_or(|(bd, _, _)| d < bd) {
                        pair = Some((d, u, v));
                    }
                }
            }
            match pair {
                Some((d, u, v)) => {
                    side[u] = !side[u];
                    side[v] = !side[v];
                    cur += d;
                }
                None => break,
            }
        }
        if best.as_ref().is_none_or(|(b, _)| cur < *b) {
            best = Some((cur, side));
        }
    }
    let (f, mut side) = best.expect("one start");
    if side.first() == Some(&true) {
        side.iter_mut().for_each(|s| *s = !*s);
    }
    Partition {
        side,
        frustration: f as u64,
        method: PartitionMethod::Heuristic,
    }
}
