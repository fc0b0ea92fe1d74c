use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::nn::{init, Binding, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::{Error, Result};

/// Weights of one LSTM layer: input/forget/cell/output gates, each with an
/// input projection (`in_dim x hidden`), recurrent projection
/// (`hidden x hidden`) and bias (`1 x hidden`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w_xi: ParamId,
    pub w_hi: ParamId,
    pub b_i: ParamId,
    pub w_xf: ParamId,
    pub w_hf: ParamId,
    pub b_f: ParamId,
    pub w_xc: ParamId,
    pub w_hc: ParamId,
    pub b_c: ParamId,
    pub w_xo: ParamId,
    pub w_ho: ParamId,
    pub b_o: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmParams {
    /// Weights uniform(−0.08, 0.08), zero biases except forget bias 1.
    pub fn register<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::register_with(store, prefix, in_dim, hidden, |rows, cols, kind| match kind {
            Slot::Weight => init::recurrent(rows, cols, rng),
            Slot::Bias => Tensor::zeros(rows, cols),
            Slot::ForgetBias => Tensor::filled(rows, cols, T::one()),
        })
    }

    /// Every tensor zero.
    pub fn zeros<T: Real>(store: &mut ParamStore<T>, prefix: &str, in_dim: usize, hidden: usize) -> Result<Self> {
        Self::register_with(store, prefix, in_dim, hidden, |rows, cols, _| Tensor::zeros(rows, cols))
    }

    fn register_with<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        mut make: impl FnMut(usize, usize, Slot) -> Tensor<T>,
    ) -> Result<Self> {
        let mut add = |name: &str, rows: usize, cols: usize, kind: Slot| {
            store.add(&format!("{prefix}.{name}"), make(rows, cols, kind))
        };
        use Slot::*;
        Ok(LstmParams {
            w_xi: add("w_xi", in_dim, hidden, Weight)?,
            w_hi: add("w_hi", hidden, hidden, Weight)?,
            b_i: add("b_i", 1, hidden, Bias)?,
            w_xf: add("w_xf", in_dim, hidden, Weight)?,
            w_hf: add("w_hf", hidden, hidden, Weight)?,
            b_f: add("b_f", 1, hidden, ForgetBias)?,
            w_xc: add("w_xc", in_dim, hidden, Weight)?,
            w_hc: add("w_hc", hidden, hidden, Weight)?,
            b_c: add("b_c", 1, hidden, Bias)?,
            w_xo: add("w_xo", in_dim, hidden, Weight)?,
            w_ho: add("w_ho", hidden, hidden, Weight)?,
            b_o: add("b_o", 1, hidden, Bias)?,
            in_dim,
            hidden,
        })
    }

    pub fn ids(&self) -> [ParamId; 12] {
        [
            self.w_xi, self.w_hi, self.b_i, self.w_xf, self.w_hf, self.b_f, self.w_xc, self.w_hc, self.b_c, self.w_xo,
            self.w_ho, self.b_o,
        ]
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Weight,
    Bias,
    ForgetBias,
}

/// Hidden output and cell state, one row per sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros<T: Real>(tape: &mut Tape<T>, rows: usize, hidden: usize) -> Self {
        LstmState {
            h: tape.constant(Tensor::zeros(rows, hidden)),
            c: tape.constant(Tensor::zeros(rows, hidden)),
        }
    }
}

fn gate<T: Real>(tape: &mut Tape<T>, b: &Binding, x: Var, h: Var, wx: ParamId, wh: ParamId, bias: ParamId) -> Var {
    let xw = tape.affine(x, b[wx], b[bias]);
    let hw = tape.matmul(h, b[wh]);
    tape.add(xw, hw)
}

/// One step:
/// `i = σ(xW_xi + hW_hi + b_i)`, `f = σ(xW_xf + hW_hf + b_f)`,
/// `c' = f ⊙ c + i ⊙ tanh(xW_xc + hW_hc + b_c)`, `o = σ(xW_xo + hW_ho + b_o)`,
/// `h' = o ⊙ tanh(c')`.
pub fn lstm_step<T: Real>(tape: &mut Tape<T>, b: &Binding, p: &LstmParams, x: Var, state: &LstmState) -> LstmState {
    let h = state.h;
    let pre_i = gate(tape, b, x, h, p.w_xi, p.w_hi, p.b_i);
    let i = tape.sigmoid(pre_i);
    let pre_f = gate(tape, b, x, h, p.w_xf, p.w_hf, p.b_f);
    let f = tape.sigmoid(pre_f);
    let pre_c = gate(tape, b, x, h, p.w_xc, p.w_hc, p.b_c);
    let cand = tape.tanh(pre_c);
    let pre_o = gate(tape, b, x, h, p.w_xo, p.w_ho, p.b_o);
    let o = tape.sigmoid(pre_o);
    let keep = tape.mul(f, state.c);
    let write = tape.mul(i, cand);
    let c = tape.add(keep, write);
    let squashed = tape.tanh(c);
    let h = tape.mul(o, squashed);
    LstmState { h, c }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LstmOutput {
    /// Hidden output at every position.
    Sequence(Vec<Var>),
    /// Hidden output after the last real position of each row.
    Last(Var),
}

impl LstmOutput {
    pub fn into_sequence(self) -> Vec<Var> {
        match self {
            LstmOutput::Sequence(s) => s,
            LstmOutput::Last(v) => alloc::vec![v],
        }
    }

    pub fn last(&self) -> Var {
        match self {
            LstmOutput::Sequence(s) => *s.last().expect("non-empty"),
            LstmOutput::Last(v) => *v,
        }
    }
}

/// Runs a layer over `seq` from a zero state. At a masked position a row
/// keeps its previous state unchanged.
pub fn lstm_forward<T: Real>(
    tape: &mut Tape<T>,
    b: &Binding,
    p: &LstmParams,
    seq: &[Var],
    mask: Option<&[Vec<bool>]>,
    return_sequences: bool,
) -> Result<LstmOutput> {
    let first = *seq.first().ok_or(Error::MissingInput("lstm_forward needs a non-empty sequence"))?;
    if let Some(m) = mask {
        if m.len() != seq.len() {
            return Err(Error::shape(
                "lstm_forward",
                format!("{} mask positions for {} steps", m.len(), seq.len()),
            ));
        }
    }
    let rows = tape.value(first).rows();
    let mut state = LstmState::zeros(tape, rows, p.hidden);
    let mut outputs = Vec::with_capacity(if return_sequences { seq.len() } else { 0 });
    for (t, &x) in seq.iter().enumerate() {
        let step_mask = mask.map(|m| &m[t]);
        if step_mask.is_some_and(|m| !m.iter().any(|&v| v)) {
            if return_sequences {
                outputs.push(state.h);
            }
            continue;
        }
        let next = lstm_step(tape, b, p, x, &state);
        state = match step_mask {
            Some(m) if m.iter().all(|&v| v) => next,
            Some(m) => LstmState {
                h: tape.select_rows(next.h, state.h, m),
                c: tape.select_rows(next.c, state.c, m),
            },
            None => next,
        };
        if return_sequences {
            outputs.push(state.h);
        }
    }
    Ok(if return_sequences {
        LstmOutput::Sequence(outputs)
    } else {
        LstmOutput::Last(state.h)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, ops};
    use crate::rng::seeded;
    use alloc::vec;

    #[test]
    fn zero_params_zero_cell() {
        let mut store = ParamStore::<f64>::new();
        let p = LstmParams::zeros(&mut store, "l", 3, 2).unwrap();
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let x = tape.constant(Tensor::row_vector(vec![0.4, -1.0, 2.0]));
        let s0 = LstmState::zeros(&mut tape, 1, 2);
        let s1 = lstm_step(&mut tape, &b, &p, x, &s0);
        assert_eq!(tape.value(s1.c).data(), &[0.0, 0.0]);
        assert_eq!(tape.value(s1.h).data(), &[0.0, 0.0]);
    }

    #[test]
    fn zero_params_carry_half_the_cell() {
        let mut store = ParamStore::<f64>::new();
        let p = LstmParams::zeros(&mut store, "l", 2, 1).unwrap();
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let x = tape.constant(Tensor::row_vector(vec![1.0, 1.0]));
        let s0 = LstmState {
            h: tape.constant(Tensor::zeros(1, 1)),
            c: tape.constant(Tensor::filled(1, 1, 2.0)),
        };
        let s1 = lstm_step(&mut tape, &b, &p, x, &s0);
        assert!((tape.value(s1.c).data()[0] - 1.0).abs() < 1e-12);
        let h = tape.value(s1.h).data()[0];
        assert!((h - 0.5 * 1f64.tanh()).abs() < 1e-12);
        assert!((h - 0.380797).abs() < 1e-6);
    }

    /// Plain-array LSTM step, independent of the tape.
    fn reference_step(store: &ParamStore<f64>, p: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = p.hidden;
        let pre = |wx: ParamId, wh: ParamId, bias: ParamId| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    let mut s = store.get(bias).get(0, j);
                    for (k, xv) in x.iter().enumerate() {
                        s += xv * store.get(wx).get(k, j);
                    }
                    for (k, hv) in h.iter().enumerate() {
                        s += hv * store.get(wh).get(k, j);
                    }
                    s
                })
                .collect()
        };
        let i: Vec<f64> = pre(p.w_xi, p.w_hi, p.b_i).into_iter().map(ops::sigmoid).collect();
        let f: Vec<f64> = pre(p.w_xf, p.w_hf, p.b_f).into_iter().map(ops::sigmoid).collect();
        let g: Vec<f64> = pre(p.w_xc, p.w_hc, p.b_c).into_iter().map(f64::tanh).collect();
        let o: Vec<f64> = pre(p.w_xo, p.w_ho, p.b_o).into_iter().map(ops::sigmoid).collect();
        let c2: Vec<f64> = (0..n).map(|j| f[j] * c[j] + i[j] * g[j]).collect();
        let h2: Vec<f64> = (0..n).map(|j| o[j] * c2[j].tanh()).collect();
        (h2, c2)
    }

    #[test]
    fn two_step_trace_matches_reference() {
        let mut store = ParamStore::<f64>::new();
        let p = LstmParams::register(&mut store, "l", 3, 2, &mut seeded(3, 0)).unwrap();
        let xs = [vec![0.5, -0.3, 0.9], vec![-1.0, 0.2, 0.1]];
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let seq: Vec<Var> = xs.iter().map(|x| tape.constant(Tensor::row_vector(x.clone()))).collect();
        let out = lstm_forward(&mut tape, &b, &p, &seq, None, true).unwrap().into_sequence();
        let (mut h, mut c) = (vec![0.0; 2], vec![0.0; 2]);
        for (t, x) in xs.iter().enumerate() {
            (h, c) = reference_step(&store, &p, x, &h, &c);
            for j in 0..2 {
                assert!((tape.value(out[t]).data()[j] - h[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_output_of_length_one_matches_sequence() {
        let mut store = ParamStore::<f64>::new();
        let p = LstmParams::register(&mut store, "l", 2, 3, &mut seeded(1, 0)).unwrap();
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let x = tape.constant(Tensor::row_vector(vec![0.3, 0.7]));
        let seq = lstm_forward(&mut tape, &b, &p, &[x], None, true).unwrap();
        let last = lstm_forward(&mut tape, &b, &p, &[x], None, false).unwrap();
        assert_eq!(tape.value(seq.last()), tape.value(last.last()));
        assert!(lstm_forward(&mut tape, &b, &p, &[], None, false).is_err());
    }

    #[test]
    fn padding_does_not_change_final_output() {
        let mut store = ParamStore::<f32>::new();
        let p = LstmParams::register(&mut store, "l", 2, 3, &mut seeded(2, 0)).unwrap();
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let a = tape.constant(Tensor::row_vector(vec![0.3, 0.7]));
        let c = tape.constant(Tensor::row_vector(vec![-0.2, 0.1]));
        let pad = tape.constant(Tensor::zeros(1, 2));
        let short = lstm_forward(&mut tape, &b, &p, &[a, c], None, false).unwrap().last();
        let mask = vec![vec![true], vec![true], vec![false], vec![false]];
        let long = lstm_forward(&mut tape, &b, &p, &[a, c, pad, pad], Some(&mask), false)
            .unwrap()
            .last();
        let bits = |v: Var, t: &Tape<f32>| t.value(v).data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(short, &tape), bits(long, &tape));
    }

    #[test]
    fn step_gradient_matches_finite_differences() {
        let mut store = ParamStore::<f64>::new();
        let p = LstmParams::register(&mut store, "l", 3, 4, &mut seeded(5, 0)).unwrap();
        // widen the weights so the check is not dominated by tiny values
        for id in p.ids() {
            let t = store.get(id).map(|v| v * 6.0);
            store.set(id, t).unwrap();
        }
        let xs = [[0.5, -0.3, 0.9], [-1.0, 0.2, 0.1], [0.3, 0.3, -0.6]];
        let mask = vec![vec![true, true], vec![true, false], vec![true, true]];
        let weights = Tensor::from_fn(2, 4, |r, c| 0.3 * (r as f64 + 1.0) - 0.2 * c as f64);
        let f = |s: &ParamStore<f64>| {
            let mut tape = Tape::new();
            let b = s.bind(&mut tape);
            let seq: Vec<Var> = xs
                .iter()
                .map(|x| {
                    let rows = [&x[..], &[x[2], x[0], x[1]][..]];
                    tape.constant(Tensor::from_rows(&rows).unwrap())
                })
                .collect();
            let out = lstm_forward(&mut tape, &b, &p, &seq, Some(&mask), false).unwrap().last();
            let wv = tape.constant(weights.clone());
            let prod = tape.mul(out, wv);
            let loss = tape.sum(prod);
            let mut g = tape.backward(loss);
            (tape.value(loss).data()[0], b.grads(s, &mut g))
        };
        let r = grad_check(&store, 1e-6, f);
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
    }
}
