use std::collections::{BTreeMap, BTreeSet};

use discourse_core::analyze::{partition_exact, partition_heuristic, temporal_fractions, Sign, SignedUserGraph};
use discourse_core::corpus::{build_vocab, compute_idf, extract_chains, index_threads};
use discourse_core::eval::evaluate_pairs;
use discourse_core::train::make_folds;
use discourse_core::{Comment, DiscourseAct, IdfKind, Thread};
use proptest::prelude::*;

/// `parents[i]` is the parent of node `i + 1` among nodes `0..=i`; `order`
/// permutes the non-root comments in the input.
fn tree(parents: &[usize], order: &[usize]) -> Thread {
    let mut comments = vec![Comment::new("n0", None, "x")];
    for &j in order {
        comments.push(Comment::new(&format!("n{}", j + 1), Some(&format!("n{}", parents[j])), "x"));
    }
    Thread::build("t", "", comments).unwrap().thread
}

fn tree_strategy() -> impl Strategy<Value = Thread> {
    (1usize..40)
        .prop_flat_map(|n| {
            let parents: Vec<BoxedStrategy<usize>> = (0..n - 1).map(|i| (0..=i).boxed()).collect();
            (parents, Just((0..n - 1).collect::<Vec<usize>>()).prop_shuffle())
        })
        .prop_map(|(p, o)| tree(&p, &o))
}

fn root_to_leaf_paths(t: &Thread) -> BTreeSet<Vec<String>> {
    let parent: BTreeMap<&str, &str> =
        t.comments.iter().filter_map(|c| c.parent_id.as_deref().map(|p| (c.id.as_str(), p))).collect();
    let inner: BTreeSet<&str> = parent.values().copied().collect();
    t.comments
        .iter()
        .filter(|c| !inner.contains(c.id.as_str()))
        .map(|leaf| {
            let mut path = vec![leaf.id.clone()];
            while let Some(p) = parent.get(path.last().unwrap().as_str()) {
                path.push(p.to_string());
            }
            path.reverse();
            path
        })
        .collect()
}

const WORDS: [&str; 6] = ["alpha", "beta", "gamma", "delta", "eps", "zeta"];

fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<Vec<usize>>>> {
    prop::collection::vec(prop::collection::vec(prop::collection::vec(0usize..WORDS.len(), 0..5), 1..4), 1..5)
}

proptest! {
    #[test]
    fn chains_are_exactly_the_root_to_leaf_paths(t in tree_strategy(), min_len in 1usize..5) {
        let got: Vec<Vec<String>> = extract_chains(&t, min_len)
            .iter()
            .map(|c| c.comments.iter().map(|&j| t.comments[j].id.clone()).collect())
            .collect();
        let want: BTreeSet<Vec<String>> = root_to_leaf_paths(&t).into_iter().filter(|p| p.len() >= min_len).collect();
        prop_assert_eq!(got.len(), want.len());
        prop_assert_eq!(got.iter().cloned().collect::<BTreeSet<_>>(), want);
    }

    #[test]
    fn idf_matches_document_frequency(docs in corpus_strategy()) {
        let mut threads: Vec<Thread> = docs
            .iter()
            .enumerate()
            .map(|(ti, comments)| {
                let cs = comments
                    .iter()
                    .enumerate()
                    .map(|(ci, words)| {
                        let body: Vec<&str> = words.iter().map(|&w| WORDS[w]).collect();
                        let parent = (ci > 0).then(|| format!("c{}", ci - 1));
                        Comment::new(&format!("c{ci}"), parent.as_deref(), &body.join(" "))
                    })
                    .collect();
                Thread::build(&format!("t{ti}"), "", cs).unwrap().thread
            })
            .collect();
        let Ok(vocab) = build_vocab(&threads, 1) else { return Ok(()) };
        index_threads(&mut threads, &vocab);
        for kind in [IdfKind::Thread, IdfKind::Comment] {
            let sets: Vec<BTreeSet<usize>> = match kind {
                IdfKind::Thread => docs.iter().map(|t| t.iter().flatten().copied().collect()).collect(),
                IdfKind::Comment => docs.iter().flatten().map(|c| c.iter().copied().collect()).collect(),
            };
            let table = compute_idf(&threads, kind).unwrap();
            prop_assert_eq!(table.document_count, sets.len());
            for (w, word) in WORDS.iter().enumerate() {
                let df = sets.iter().filter(|s| s.contains(&w)).count();
                match vocab.get(word) {
                    Some(i) => {
                        let want = (sets.len() as f64 / df as f64).ln();
                        prop_assert!((table.get(i) - want).abs() <= 1e-12);
                    }
                    None => prop_assert_eq!(df, 0),
                }
            }
        }
    }

    #[test]
    fn metrics_match_counting(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
        let m = evaluate_pairs(&pairs, 4);
        let mut weighted = 0.0;
        for c in 0..4 {
            let tp = pairs.iter().filter(|&&(g, p)| g == c && p == c).count() as f64;
            let gold = pairs.iter().filter(|&&(g, _)| g == c).count() as f64;
            let pred = pairs.iter().filter(|&&(_, p)| p == c).count() as f64;
            let p = if pred > 0.0 { tp / pred } else { 0.0 };
            let r = if gold > 0.0 { tp / gold } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            prop_assert!((m.per_class[c].precision - p).abs() < 1e-12);
            prop_assert!((m.per_class[c].recall - r).abs() < 1e-12);
            prop_assert!((m.per_class[c].f1 - f).abs() < 1e-12);
            weighted += gold * f;
        }
        prop_assert!((m.weighted.f1 - weighted / pairs.len() as f64).abs() < 1e-12);
        let correct = pairs.iter().filter(|(g, p)| g == p).count();
        prop_assert!((m.accuracy - correct as f64 / pairs.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn heuristic_partition_reaches_the_optimum(
        n in 2usize..9,
        edges in prop::collection::vec((0usize..9, 0usize..9, any::<bool>()), 1..30),
        seed in any::<u64>(),
    ) {
        let mut g = SignedUserGraph::new((0..n).map(|u| format!("u{u}")).collect());
        for (u, v, pos) in edges {
            g.add(u % n, v % n, if pos { Sign::Positive } else { Sign::Negative });
        }
        let best = (0u32..1 << n)
            .map(|mask| g.frustration(&(0..n).map(|u| mask >> u & 1 == 1).collect::<Vec<_>>()))
            .min()
            .unwrap();
        prop_assert_eq!(partition_exact(&g).frustration, best);
        let h = partition_heuristic(&g, 10, seed);
        prop_assert_eq!(h.frustration, best);
        prop_assert_eq!(g.frustration(&h.side), best);
    }

    #[test]
    fn folds_partition_and_balance(keys in prop::collection::vec(0usize..6, 5..80), k in 2usize..6, seed in any::<u64>()) {
        let plan = make_folds(&keys, k, seed).unwrap();
        prop_assert_eq!(plan.assignment.len(), keys.len());
        let mut seen = vec![0usize; keys.len()];
        for f in 0..k {
            for i in plan.test_indices(f) {
                seen[i] += 1;
            }
            prop_assert_eq!(plan.test_indices(f).len() + plan.train_indices(f).len(), keys.len());
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        let spread = |members: &[usize]| {
            let mut per = vec![0usize; k];
            for &i in members {
                per[plan.assignment[i]] += 1;
            }
            per.iter().max().unwrap() - per.iter().min().unwrap()
        };
        prop_assert!(spread(&(0..keys.len()).collect::<Vec<_>>()) <= 1);
        for key in plan.keys.iter().collect::<BTreeSet<_>>() {
            let members: Vec<usize> = (0..keys.len()).filter(|&i| plan.keys[i] == *key).collect();
            prop_assert!(spread(&members) <= 1);
        }
    }

    #[test]
    fn window_fractions_sum_to_one(
        comments in prop::collection::vec((prop::option::weighted(0.9, -1_000_000i64..1_000_000), 0usize..10), 1..80),
        window in 1i64..200_000,
    ) {
        let input: Vec<(Option<i64>, DiscourseAct)> =
            comments.iter().map(|&(t, a)| (t, DiscourseAct::from_code(a).unwrap())).collect();
        let Ok(s) = temporal_fractions(&input, window) else {
            prop_assert!(input.iter().all(|(t, _)| t.is_none()));
            return Ok(());
        };
        prop_assert_eq!(s.skipped, input.iter().filter(|(t, _)| t.is_none()).count());
        for w in s.windows.windows(2) {
            prop_assert!(w[0].0 < w[1].0);
        }
        for (start, f) in &s.windows {
            prop_assert_eq!(start.rem_euclid(window), 0);
            prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
