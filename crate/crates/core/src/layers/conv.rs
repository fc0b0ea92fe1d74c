use alloc::string::String;
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::nn::{init, Binding, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::{Error, Result};

/// Kernel widths, in concatenation order.
pub const NGRAM_SIZES: [usize; 3] = [2, 3, 4];
const MIN_POSITIONS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

/// One `(k·in_dim) x filters` kernel and `1 x filters` bias per n-gram size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvParams {
    pub kernels: [ParamId; 3],
    pub biases: [ParamId; 3],
    pub in_dim: usize,
    pub filters: usize,
    pub activation: Activation,
}

impl ConvParams {
    pub fn register<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        in_dim: usize,
        filters: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut kernels = Vec::with_capacity(3);
        let mut biases = Vec::with_capacity(3);
        for k in NGRAM_SIZES {
            kernels.push(store.add(&format!("{prefix}.w{k}"), init::glorot(k * in_dim, filters, rng))?);
            biases.push(store.add(&format!("{prefix}.b{k}"), Tensor::zeros(1, filters))?);
        }
        Ok(ConvParams {
            kernels: [kernels[0], kernels[1], kernels[2]],
            biases: [biases[0], biases[1], biases[2]],
            in_dim,
            filters,
            activation: Activation::Tanh,
        })
    }

    pub fn output_dim(&self) -> usize {
        NGRAM_SIZES.len() * self.filters
    }
}

/// Valid 1-D convolutions of widths 2, 3 and 4 over `words` (one
/// `rows x in_dim` tensor per position), activation, then mean pooling over
/// each row's windows. Row `r` has `lengths[r]` real tokens; windows starting
/// beyond `max(len - k + 1, 1)` are ignored. Returns `rows x 3F`.
pub fn conv_ngram_encoder<T: Real>(
    tape: &mut Tape<T>,
    b: &Binding,
    params: &ConvParams,
    words: &[Var],
    lengths: &[usize],
) -> Result<Var> {
    let Some(&first) = words.first() else {
        return Err(Error::shape("conv_ngram_encoder", String::from("empty sequence")));
    };
    let (rows, dim) = tape.value(first).shape();
    if dim != params.in_dim || lengths.len() != rows {
        return Err(Error::shape(
            "conv_ngram_encoder",
            format!(
                "{rows}x{dim} inputs with {} lengths, expected width {}",
                lengths.len(),
                params.in_dim
            ),
        ));
    }
    let mut seq = words.to_vec();
    if seq.len() < MIN_POSITIONS {
        let pad = tape.constant(Tensor::zeros(rows, dim));
        seq.resize(MIN_POSITIONS, pad);
    }
    let mut pooled = Vec::with_capacity(NGRAM_SIZES.len());
    for (s, &k) in NGRAM_SIZES.iter().enumerate() {
        let windows = seq.len() - k + 1;
        let counts: Vec<usize> = lengths
            .iter()
            .map(|&l| (l + 1).saturating_sub(k).max(1).min(windows))
            .collect();
        let mut acc: Option<Var> = None;
        for t in 0..windows {
            let weights: Vec<T> = counts
                .iter()
                .map(|&n| if t < n { T::one() / T::lit(n as f64) } else { T::zero() })
                .collect();
            if weights.iter().all(|w| *w == T::zero()) {
                break;
            }
            let window = tape.concat_cols(&seq[t..t + k]);
            let z = tape.affine(window, b[params.kernels[s]], b[params.biases[s]]);
            let y = match params.activation {
                Activation::Tanh => tape.tanh(z),
                Activation::Identity => z,
            };
            let w = tape.constant(Tensor::column_vector(weights));
            let scaled = tape.scale_rows(y, w);
            acc = Some(match acc {
                None => scaled,
                Some(a) => tape.add(a, scaled),
            });
        }
        pooled.push(acc.expect("at least one window"));
    }
    Ok(tape.concat_cols(&pooled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use crate::rng::seeded;
    use alloc::vec;

    fn scalar_conv(store: &mut ParamStore<f64>) -> ConvParams {
        let mut kernels = Vec::new();
        let mut biases = Vec::new();
        for k in NGRAM_SIZES {
            kernels.push(store.add(&format!("w{k}"), Tensor::filled(k, 1, 1.0)).unwrap());
            biases.push(store.add(&format!("b{k}"), Tensor::zeros(1, 1)).unwrap());
        }
        ConvParams {
            kernels: [kernels[0], kernels[1], kernels[2]],
            biases: [biases[0], biases[1], biases[2]],
            in_dim: 1,
            filters: 1,
            activation: Activation::Identity,
        }
    }

    #[test]
    fn bigram_of_one_two_three_pools_to_four() {
        let mut store = ParamStore::new();
        let p = scalar_conv(&mut store);
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let words: Vec<Var> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&x| tape.constant(Tensor::row_vector(vec![x])))
            .collect();
        let out = conv_ngram_encoder(&mut tape, &b, &p, &words, &[3]).unwrap();
        let v = tape.value(out);
        assert_eq!(v.shape(), (1, 3));
        // k=2: windows [3, 5] -> 4; k=3: [6]; k=4 falls back to the first window [6]
        assert_eq!(v.data(), &[4.0, 6.0, 6.0]);
    }

    #[test]
    fn zero_input_zero_bias_is_zero() {
        let mut store = ParamStore::<f64>::new();
        let p = ConvParams::register(&mut store, "conv", 3, 4, &mut seeded(1, 0)).unwrap();
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let words: Vec<Var> = (0..5).map(|_| tape.constant(Tensor::zeros(2, 3))).collect();
        let out = conv_ngram_encoder(&mut tape, &b, &p, &words, &[5, 2]).unwrap();
        assert_eq!(tape.value(out).shape(), (2, p.output_dim()));
        assert!(tape.value(out).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn padding_beyond_length_is_ignored() {
        let mut store = ParamStore::<f64>::new();
        let p = ConvParams::register(&mut store, "conv", 2, 3, &mut seeded(2, 0)).unwrap();
        let run = |extra: usize| {
            let mut tape = Tape::new();
            let b = store.bind(&mut tape);
            let mut words: Vec<Var> = (0..5)
                .map(|t| tape.constant(Tensor::row_vector(vec![t as f64 * 0.3, 1.0 - t as f64 * 0.2])))
                .collect();
            for _ in 0..extra {
                words.push(tape.constant(Tensor::zeros(1, 2)));
            }
            let out = conv_ngram_encoder(&mut tape, &b, &p, &words, &[5]).unwrap();
            tape.value(out).clone()
        };
        assert_eq!(run(0), run(3));
    }

    #[test]
    fn gradient_through_conv_and_pool() {
        let mut store = ParamStore::new();
        let p = ConvParams::register(&mut store, "conv", 3, 2, &mut seeded(3, 0)).unwrap();
        for id in p.biases {
            let t = Tensor::from_fn(1, 2, |_, c| 0.1 * c as f64 - 0.05);
            store.set(id, t).unwrap();
        }
        let emb = store
            .add("emb", Tensor::from_fn(10, 3, |r, c| ((r * 3 + c) as f64 * 0.37).cos()))
            .unwrap();
        let f = |s: &ParamStore<f64>| {
            let mut tape = Tape::new();
            let b = s.bind(&mut tape);
            let words: Vec<Var> = (0..5).map(|t| tape.gather(b[emb], &[t, t + 5], None)).collect();
            let out = conv_ngram_encoder(&mut tape, &b, &p, &words, &[5, 3]).unwrap();
            let w = tape.constant(Tensor::from_fn(2, 6, |r, c| (r + c) as f64 * 0.25 - 0.6));
            let m = tape.mul(out, w);
            let loss = tape.sum(m);
            let mut g = tape.backward(loss);
            (tape.value(loss).data()[0], b.grads(s, &mut g))
        };
        let r = grad_check(&store, 1e-6, f);
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
    }
}
