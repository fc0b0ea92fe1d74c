//! Classification metrics, chain tagging and per-comment aggregation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::DiscourseAct;
use crate::dataset::ChainExample;
use crate::models::ChainBatch;
use crate::nn::Real;
use crate::train::BucketModel;
use crate::{Error, Result};

/// `counts[gold][pred]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Confusion {
    pub counts: Vec<Vec<usize>>,
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Confusion {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_pairs(pairs: &[(usize, usize)], classes: usize) -> Self {
        let mut c = Confusion::new(classes);
        for &(g, p) in pairs {
            c.counts[g][p] += 1;
        }
        c
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> usize {
        self.counts.iter().map(|row| row[class]).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// Indexed by class code; excluded classes hold zeros.
    pub per_class: Vec<Scores>,
    /// Unweighted mean over classes that occur as gold or prediction.
    pub macro_avg: Scores,
    /// Support-weighted mean.
    pub weighted: Scores,
    pub accuracy: f64,
    pub confusion: Confusion,
}

/// Scores of the classes in `included`. Rows of other gold classes are
/// ignored; predictions of other classes still count as misses.
pub fn metrics_over(confusion: &Confusion, included: &[usize]) -> Metrics {
    let classes = confusion.classes();
    let mut per_class = vec![Scores::default(); classes];
    let total: usize = included.iter().map(|&c| confusion.support(c)).sum();
    let correct: usize = included.iter().map(|&c| confusion.counts[c][c]).sum();
    let (mut macro_avg, mut weighted) = (Scores::default(), Scores::default());
    let mut active = 0usize;
    for &c in included {
        let tp = confusion.counts[c][c];
        let support = confusion.support(c);
        let predicted: usize = included.iter().map(|&g| confusion.counts[g][c]).sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, support);
        let s = Scores {
            precision: p,
            recall: r,
            f1: f1(p, r),
            support,
        };
        per_class[c] = s;
        if support > 0 || predicted > 0 {
            active += 1;
            macro_avg.precision += p;
            macro_avg.recall += r;
            macro_avg.f1 += s.f1;
        }
        let w = ratio(support, total);
        weighted.precision += w * p;
        weighted.recall += w * r;
        weighted.f1 += w * s.f1;
    }
    let a = active.max(1) as f64;
    macro_avg.precision /= a;
    macro_avg.recall /= a;
    macro_avg.f1 /= a;
    macro_avg.support = total;
    weighted.support = total;
    Metrics {
        per_class,
        macro_avg,
        weighted,
        accuracy: ratio(correct, total),
        confusion: confusion.clone(),
    }
}

/// Metrics over every class of `(gold, pred)` pairs.
pub fn evaluate_pairs(pairs: &[(usize, usize)], classes: usize) -> Metrics {
    let all: Vec<usize> = (0..classes).collect();
    metrics_over(&Confusion::from_pairs(pairs, classes), &all)
}

/// The nine-act view: comments whose gold act is `Other` are dropped and
/// `Other` gets no score of its own.
pub fn evaluate_without_other(pairs: &[(usize, usize)]) -> Metrics {
    let nine: Vec<usize> = DiscourseAct::ALL
        .iter()
        .filter(|&&a| a != DiscourseAct::Other)
        .map(|a| a.code())
        .collect();
    metrics_over(&Confusion::from_pairs(pairs, DiscourseAct::COUNT), &nine)
}

/// Per-comment outputs of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainPrediction {
    pub thread_id: String,
    pub comment_ids: Vec<String>,
    pub gold: Vec<Option<DiscourseAct>>,
    pub pred: Vec<DiscourseAct>,
    pub probs: Vec<Vec<f32>>,
    /// Relevance over each comment's real (unpadded) tokens.
    pub relevance: Option<Vec<Vec<f32>>>,
    /// Tokens the relevance refers to.
    pub tokens: Vec<Vec<usize>>,
}

/// Tags `chains` with the bucket models of one fold, picking each chain's
/// model by length. Tokens beyond a model's `C_max` are dropped.
pub fn tag<T: Real>(models: &[BucketModel<T>], chains: &[&ChainExample], batch_size: usize) -> Result<Vec<ChainPrediction>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in chains.iter().enumerate() {
        let m = pick(models, c.len()).ok_or(Error::EmptyCorpus("models"))?;
        groups.entry(m).or_default().push(i);
    }
    let mut out: Vec<Option<ChainPrediction>> = vec![None; chains.len()];
    for (m, members) in groups {
        let bm = &models[m];
        for chunk in members.chunks(batch_size.max(1)) {
            let refs: Vec<&ChainExample> = chunk.iter().map(|&i| chains[i]).collect();
            let len = refs.iter().map(|e| e.len()).max().unwrap_or(1);
            let batch = ChainBatch::<T>::new(&refs, len, bm.c_max)?;
            let p = bm.model.predict(&batch)?;
            for (c, &i) in chunk.iter().enumerate() {
                let e = chains[i];
                let rows: Vec<usize> = (0..e.len()).map(|pos| pos * batch.chains + c).collect();
                let probs: Vec<Vec<f32>> = rows
                    .iter()
                    .map(|&r| p.probs.row(r).iter().map(|v| v.as_f64() as f32).collect())
                    .collect();
                let pred = rows
                    .iter()
                    .map(|&r| DiscourseAct::from_code(crate::models::argmax(p.probs.row(r))).expect("class code"))
                    .collect();
                let tokens: Vec<Vec<usize>> = e.tokens.iter().map(|t| t[..t.len().min(bm.c_max)].to_vec()).collect();
                let relevance = p.relevance.as_ref().map(|rel| {
                    rows.iter()
                        .zip(&tokens)
                        .map(|(&r, t)| rel.row(r)[..t.len()].iter().map(|v| v.as_f64() as f32).collect())
                        .collect()
                });
                out[i] = Some(ChainPrediction {
                    thread_id: e.thread_id.clone(),
                    comment_ids: e.comment_ids.clone(),
                    gold: e.gold.clone(),
                    pred,
                    probs,
                    relevance,
                    tokens,
                });
            }
        }
    }
    Ok(out.into_iter().map(|p| p.expect("every chain tagged")).collect())
}

fn pick<T>(models: &[BucketModel<T>], len: usize) -> Option<usize> {
    let shorter = (0..models.len()).filter(|&i| models[i].len <= len).max_by_key(|&i| models[i].len);
    shorter.or_else(|| (0..models.len()).min_by_key(|&i| models[i].len))
}

/// One comment's prediction after voting across the chains containing it.
#[derive(Clone, Debug, PartialEq)]
pub struct CommentPrediction {
    pub thread_id: String,
    pub comment_id: String,
    pub gold: Option<DiscourseAct>,
    pub pred: DiscourseAct,
    /// Mean class distribution over the chains.
    pub probs: Vec<f32>,
    pub chains: usize,
}

/// Majority vote per comment. Ties go to the prediction made in the
/// longest chain among the tied acts, then to the earliest such chain.
pub fn aggregate(chains: &[ChainPrediction]) -> Vec<CommentPrediction> {
    struct Acc {
        gold: Option<DiscourseAct>,
        votes: [usize; DiscourseAct::COUNT],
        probs: Vec<f32>,
        chains: usize,
        /// Longest chain voting for each act, as (length, -order).
        best: [Option<(usize, core::cmp::Reverse<usize>)>; DiscourseAct::COUNT],
    }
    let mut order: Vec<(String, String)> = Vec::new();
    let mut acc: BTreeMap<(String, String), Acc> = BTreeMap::new();
    for (ci, chain) in chains.iter().enumerate() {
        for pos in 0..chain.comment_ids.len() {
            let key = (chain.thread_id.clone(), chain.comment_ids[pos].clone());
            let a = acc.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                Acc {
                    gold: chain.gold[pos],
                    votes: [0; DiscourseAct::COUNT],
                    probs: vec![0.0; chain.probs[pos].len()],
                    chains: 0,
                    best: [None; DiscourseAct::COUNT],
                }
            });
            let p = chain.pred[pos].code();
            a.votes[p] += 1;
            a.chains += 1;
            for (dst, v) in a.probs.iter_mut().zip(&chain.probs[pos]) {
                *dst += v;
            }
            let cand = (chain.comment_ids.len(), core::cmp::Reverse(ci));
            if a.best[p].is_none_or(|b| cand > b) {
                a.best[p] = Some(cand);
            }
        }
    }
    order
        .into_iter()
        .map(|key| {
            let a = &acc[&key];
            let top = *a.votes.iter().max().expect("classes");
            let pred = (0..DiscourseAct::COUNT)
                .filter(|&c| a.votes[c] == top)
                .max_by_key(|&c| a.best[c])
                .expect("a vote");
            CommentPrediction {
                thread_id: key.0.clone(),
                comment_id: key.1.clone(),
                gold: a.gold,
                pred: DiscourseAct::from_code(pred).expect("class code"),
                probs: a.probs.iter().map(|v| v / a.chains as f32).collect(),
                chains: a.chains,
            }
        })
        .collect()
}

/// `(gold, pred)` codes of labelled comments.
pub fn labelled_pairs(comments: &[CommentPrediction]) -> Vec<(usize, usize)> {
    comments
        .iter()
        .filter_map(|c| c.gold.map(|g| (g.code(), c.pred.code())))
        .collect()
}

/// Histogram of how many chains each comment appeared in.
pub fn chain_count_histogram(comments: &[CommentPrediction]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for c in comments {
        *h.entry(c.chains).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    #[test]
    fn hand_computed_scores() {
        // gold 0: 3 rows (2 right, 1 as 1); gold 1: 1 row (as 0).
        let m = evaluate_pairs(&[(0, 0), (0, 0), (0, 1), (1, 0)], 3);
        let s0 = m.per_class[0];
        assert!((s0.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((s0.recall - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.per_class[1].f1, 0.0);
        assert_eq!(m.per_class[2], Scores::default());
        assert!((m.weighted.f1 - 0.5).abs() < 1e-12);
        assert!((m.macro_avg.f1 - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.accuracy - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_is_zero() {
        let m = evaluate_pairs(&[], 10);
        assert_eq!(m.weighted.f1, 0.0);
        assert_eq!(m.accuracy, 0.0);
    }

    #[test]
    fn other_is_dropped_from_nine_view() {
        let other = DiscourseAct::Other.code();
        let q = DiscourseAct::Question.code();
        let m = evaluate_without_other(&[(other, other), (q, q), (q, other)]);
        assert_eq!(m.weighted.support, 2);
        assert!((m.per_class[q].recall - 0.5).abs() < 1e-12);
        assert_eq!(m.per_class[q].precision, 1.0);
        assert_eq!(m.per_class[other], Scores::default());
    }

    fn chain(ids: &[&str], preds: &[DiscourseAct]) -> ChainPrediction {
        ChainPrediction {
            thread_id: String::from("t"),
            comment_ids: ids.iter().map(|s| String::from(*s)).collect(),
            gold: vec![Some(DiscourseAct::Answer); ids.len()],
            pred: preds.to_vec(),
            probs: vec![vec![0.1; 10]; ids.len()],
            relevance: None,
            tokens: vec![vec![]; ids.len()],
        }
    }

    #[test]
    fn majority_then_longest_chain() {
        use DiscourseAct::*;
        let chains = [
            chain(&["a", "b"], &[Question, Answer]),
            chain(&["a", "c", "d"], &[Question, Humor, Elaboration]),
            chain(&["a", "c"], &[Announcement, Agreement]),
        ];
        let agg = aggregate(&chains);
        let by: BTreeMap<_, _> = agg.iter().map(|c| (c.comment_id.as_str(), c)).collect();
        assert_eq!(by["a"].pred, Question);
        assert_eq!(by["a"].chains, 3);
        assert_eq!(by["c"].pred, Humor);
        assert_eq!(by["d"].chains, 1);
        assert_eq!(agg.len(), 4);
        let h = chain_count_histogram(&agg);
        assert_eq!((h[&1], h[&2], h[&3]), (2, 1, 1));
        assert_eq!(format!("{:?}", labelled_pairs(&agg).len()), "4");
    }
}
