use super::*;
use crate::dataset::ChainExample;
use crate::layers::{lstm_step, AttentionTargets, LstmState};
use crate::nn::{grad_check, Optimizer, Sgd};
use crate::rng::seeded;

pub(crate) fn toy_examples(seed: u64, chains: usize, chain_len: usize, vocab: usize, dim: usize) -> Vec<ChainExample> {
    let mut rng = seeded(seed, 99);
    (0..chains)
        .map(|c| {
            let tokens: Vec<Vec<usize>> = (0..chain_len)
                .map(|_| {
                    let n = rng.gen_range(1..=4);
                    (0..n).map(|_| rng.gen_range(2..vocab)).collect()
                })
                .collect();
            let mut vec_of = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
            let targets = (0..chain_len)
                .map(|pos| {
                    if pos == 0 {
                        AttentionTargets::zeros(dim)
                    } else {
                        AttentionTargets {
                            first: vec_of(dim),
                            parent: vec_of(dim),
                        }
                    }
                })
                .collect();
            let vectors = (0..chain_len).map(|_| vec_of(dim)).collect();
            ChainExample {
                thread_id: format!("t{c}"),
                comment_ids: (0..chain_len).map(|i| format!("c{i}")).collect(),
                gold: (0..chain_len)
                    .map(|_| DiscourseAct::from_code(rng.gen_range(0..DiscourseAct::COUNT)))
                    .collect(),
                tokens,
                targets: Some(targets),
                vectors: Some(vectors),
            }
        })
        .collect()
}

fn toy_batch<T: Real>(seed: u64) -> ChainBatch<T> {
    let ex = toy_examples(seed, 2, 3, 10, 6);
    let refs: Vec<&ChainExample> = ex.iter().collect();
    ChainBatch::new(&refs, 3, 4).unwrap()
}

fn toy_model<T: Real>(arch: Architecture, seed: u64) -> Model<T> {
    let mut config = ModelConfig::toy(arch, 10, 5, 4);
    config.word_dim = 6;
    config.comment_dim = 6;
    config.filters = 3;
    Model::new(config, &mut seeded(seed, 0)).unwrap()
}

fn probs_of<T: Real>(model: &Model<T>, batch: &ChainBatch<T>) -> Tensor<T> {
    let mut tape = Tape::new();
    let b = model.store.bind(&mut tape);
    let out = model.forward(&mut tape, &b, batch).unwrap();
    tape.value(out.probs).clone()
}

#[test]
fn architecture_names_round_trip() {
    for a in Architecture::ALL {
        assert_eq!(a.name().parse::<Architecture>().unwrap(), a);
    }
    assert!("transformer".parse::<Architecture>().is_err());
}

#[test]
fn mlp_input_width_and_zero_weights() {
    let model = Model::<f64>::new(ModelConfig::new(Architecture::Mlp, 10), &mut seeded(0, 0)).unwrap();
    assert_eq!(model.store.by_name("mlp.h1.w").unwrap().rows(), 1410);

    let mut model = toy_model::<f64>(Architecture::Mlp, 1);
    for id in model.store.ids().collect::<Vec<_>>() {
        let (r, c) = model.store.get(id).shape();
        model.store.set(id, Tensor::zeros(r, c)).unwrap();
    }
    let p = probs_of(&model, &toy_batch(0));
    assert!(p.data().iter().all(|&x| (x - 0.1).abs() < 1e-15));
}

#[test]
fn every_architecture_emits_distributions() {
    for arch in Architecture::ALL {
        let model = toy_model::<f64>(arch, 2);
        let batch = toy_batch(3);
        let p = probs_of(&model, &batch);
        assert_eq!(p.shape(), (6, 10), "{arch}");
        for r in 0..p.rows() {
            let s: f64 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-6, "{arch} row {r}");
        }
        let mut tape = Tape::new();
        let b = model.store.bind(&mut tape);
        let (loss, _) = model.loss(&mut tape, &b, &batch, None).unwrap();
        assert!(tape.value(loss).data()[0].is_finite());
        let pred = model.predict(&batch).unwrap();
        assert_eq!(pred.argmax().len(), 6);
        assert_eq!(pred.relevance.is_some(), arch.uses_attention());
    }
}

#[test]
fn seq_lstm_single_comment_is_head_of_one_step() {
    let model = toy_model::<f64>(Architecture::SeqLstm, 4);
    let ex = toy_examples(5, 1, 1, 10, 6);
    let batch = ChainBatch::<f64>::new(&[&ex[0]], 1, 4).unwrap();
    let p = probs_of(&model, &batch);
    let Layout::Seq { lstm, head } = model.layout else { unreachable!() };
    let mut tape = Tape::new();
    let b = model.store.bind(&mut tape);
    let x = tape.constant(batch.vectors.clone().unwrap());
    let zero = LstmState::zeros(&mut tape, 1, 5);
    let s = lstm_step(&mut tape, &b, &lstm, x, &zero);
    let z = head.apply(&mut tape, &b, s.h);
    let d = tape.softmax_rows(z, None);
    assert_eq!(tape.value(d), &p);
}

#[test]
fn order_sensitivity() {
    let seq = toy_model::<f64>(Architecture::SeqLstm, 6);
    let mut ex = toy_examples(7, 1, 3, 10, 6).remove(0);
    let forward = ChainBatch::<f64>::new(&[&ex], 3, 4).unwrap();
    let a = probs_of(&seq, &forward);
    ex.vectors.as_mut().unwrap().swap(0, 1);
    let swapped = ChainBatch::<f64>::new(&[&ex], 3, 4).unwrap();
    let b = probs_of(&seq, &swapped);
    // the last comment's own input is unchanged, only its history moved
    assert_ne!(a.row(2), b.row(2));

    // the MLP's third prediction depends only on comments 1 and 2 and the gold act of 1
    let mlp = toy_model::<f64>(Architecture::Mlp, 6);
    let m1 = probs_of(&mlp, &forward);
    let mut ex2 = ex.clone();
    ex2.vectors.as_mut().unwrap().swap(0, 1);
    ex2.vectors.as_mut().unwrap()[0] = vec![0.0; 6];
    let m2 = probs_of(&mlp, &ChainBatch::<f64>::new(&[&ex2], 3, 4).unwrap());
    assert_eq!(m1.row(2), m2.row(2));
}

#[test]
fn uniform_relevance_wiring() {
    for (attn, plain) in [
        (Architecture::HlstmAttn, Architecture::Hlstm),
        (Architecture::CnnLstmAttn, Architecture::CnnLstm),
    ] {
        let mut with = toy_model::<f64>(attn, 8);
        let mut without = toy_model::<f64>(plain, 9);
        for id in without.store.ids().collect::<Vec<_>>() {
            let name = without.store.name(id).to_string();
            without.store.set(id, with.store.by_name(&name).unwrap().clone()).unwrap();
        }
        let batch = toy_batch::<f64>(10);
        let ones = Tensor::filled(batch.rows(), batch.width, 1.0);
        let mut tape = Tape::new();
        let b = with.store.bind(&mut tape);
        let out = with.forward_with_relevance(&mut tape, &b, &batch, &ones).unwrap();
        assert_eq!(tape.value(out.probs), &probs_of(&without, &batch), "{attn}");

        let uniform = Tensor::from_fn(batch.rows(), batch.width, |r, t| {
            if t < batch.lengths[r] {
                1.0 / batch.lengths[r] as f64
            } else {
                0.0
            }
        });
        let k = with.store.id(ATTENTION).unwrap();
        let (r, c) = with.store.get(k).shape();
        with.store.set(k, Tensor::zeros(r, c)).unwrap();
        let mut tape = Tape::new();
        let b = with.store.bind(&mut tape);
        let fixed = with.forward_with_relevance(&mut tape, &b, &batch, &uniform).unwrap();
        let learned = with.forward(&mut tape, &b, &batch).unwrap();
        let (pf, pl) = (tape.value(fixed.probs), tape.value(learned.probs));
        assert!(pf.max_abs_diff(pl) < 1e-12, "{attn}");
        assert!(tape.value(learned.relevance.unwrap()).max_abs_diff(&uniform) < 1e-12);
    }
}

#[test]
fn conv_comment_vector_is_three_filters_wide() {
    let model = toy_model::<f64>(Architecture::CnnLstm, 0);
    assert_eq!(model.store.by_name("comment_lstm.w_xi").unwrap().rows(), 9);
}

#[test]
fn padded_chain_leaves_loss_bitwise_unchanged() {
    for arch in Architecture::ALL {
        let model = toy_model::<f32>(arch, 11);
        let ex = toy_examples(12, 3, 3, 10, 6);
        let mut refs: Vec<&ChainExample> = ex.iter().collect();
        let loss_of = |refs: &[&ChainExample]| {
            let batch = ChainBatch::<f32>::new(refs, 3, 4).unwrap();
            let mut tape = Tape::new();
            let b = model.store.bind(&mut tape);
            let (l, _) = model.loss(&mut tape, &b, &batch, None).unwrap();
            tape.value(l).data()[0]
        };
        let base = loss_of(&refs);
        let empty = ChainExample {
            thread_id: String::from("pad"),
            comment_ids: vec![],
            tokens: vec![],
            gold: vec![],
            targets: None,
            vectors: None,
        };
        refs.insert(1, &empty);
        assert_eq!(base.to_bits(), loss_of(&refs).to_bits(), "{arch}");
    }
}

#[test]
fn transfer_keeps_shared_tensors() {
    let model = toy_model::<f64>(Architecture::HlstmAttn, 13);
    let wider = model.transfer(6, &mut seeded(14, 0)).unwrap();
    for (name, t) in model.store.iter() {
        let u = wider.store.by_name(name).unwrap();
        if name == ATTENTION {
            assert_eq!(u.rows(), 6);
            for r in 0..4 {
                assert_eq!(u.row(r), t.row(r));
            }
            assert_ne!(u.row(5), t.row(3));
        } else {
            assert_eq!(u, t, "{name}");
        }
    }
    let narrower = wider.transfer(3, &mut seeded(15, 0)).unwrap();
    assert_eq!(narrower.store.by_name(ATTENTION).unwrap().row(2), model.store.by_name(ATTENTION).unwrap().row(2));
}

#[test]
fn from_tensors_reproduces_forward() {
    let model = toy_model::<f32>(Architecture::CnnLstmAttn, 16);
    let tensors = model.store.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
    let copy = Model::from_tensors(model.config.clone(), tensors).unwrap();
    let batch = toy_batch::<f32>(17);
    assert_eq!(model.predict(&batch).unwrap(), copy.predict(&batch).unwrap());
}

#[test]
fn attention_requires_targets() {
    let model = toy_model::<f64>(Architecture::HlstmAttn, 0);
    let mut batch = toy_batch::<f64>(0);
    batch.targets = None;
    assert!(matches!(model.predict(&batch), Err(Error::MissingInput(_))));
}

#[test]
fn gradients_of_every_architecture() {
    for arch in Architecture::ALL {
        let model = toy_model::<f64>(arch, 20);
        let batch = toy_batch::<f64>(21);
        let weights: Vec<f64> = (0..10).map(|c| 0.5 + c as f64 * 0.1).collect();
        let f = |s: &ParamStore<f64>| {
            let mut tape = Tape::new();
            let b = s.bind(&mut tape);
            let (loss, _) = model.loss(&mut tape, &b, &batch, Some(&weights)).unwrap();
            let mut g = tape.backward(loss);
            (tape.value(loss).data()[0], b.grads(s, &mut g))
        };
        let r = grad_check(&model.store, 1e-5, f);
        assert!(r.max_rel_error <= 1e-4, "{arch}: {r:?}");
    }
}

#[test]
fn small_step_decreases_batch_loss() {
    for arch in Architecture::ALL {
        let mut failures = 0;
        for seed in 0..10 {
            let mut model = toy_model::<f64>(arch, 100 + seed);
            let batch = toy_batch::<f64>(200 + seed);
            let eval = |m: &Model<f64>| {
                let mut tape = Tape::new();
                let b = m.store.bind(&mut tape);
                let (loss, _) = m.loss(&mut tape, &b, &batch, None).unwrap();
                let mut g = tape.backward(loss);
                (tape.value(loss).data()[0], b.grads(&m.store, &mut g))
            };
            let (before, grads) = eval(&model);
            Sgd { lr: 1e-3 }.step(&mut model.store, &grads);
            if eval(&model).0 >= before {
                failures += 1;
            }
        }
        assert!(failures <= 1, "{arch}: {failures} failures");
    }
}
