//! Composable layers recorded on a [`Tape`](crate::nn::Tape).
//!
//! Batched layout: a sequence is a slice of `rows x dim` tensors, one per
//! position, where each row is one sequence of the batch. Position masks are
//! `Vec<bool>` per position with one entry per row (`true` = real token).

mod attention;
mod conv;
mod lstm;

pub use attention::{
    apply_relevance, attention_targets, relevance_distribution, target_vector, AttentionParams, AttentionTargets,
};
pub use conv::{conv_ngram_encoder, Activation, ConvParams, NGRAM_SIZES};
pub use lstm::{lstm_forward, lstm_step, LstmOutput, LstmParams, LstmState};

use crate::corpus::PAD;
use crate::nn::{Real, Tape, Var};

/// Rows of the embedding table for `ids`; the padding row is frozen.
pub fn embedding_lookup<T: Real>(tape: &mut Tape<T>, table: Var, ids: &[usize]) -> Var {
    tape.gather(table, ids, Some(PAD))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ParamStore, Sgd, Optimizer, Tensor};
    use alloc::vec;

    #[test]
    fn pad_row_is_zero_and_untouched() {
        let mut store = ParamStore::<f64>::new();
        let pre = Tensor::from_fn(5, 3, |r, c| if r == PAD { 0.0 } else { (r * 3 + c) as f64 * 0.1 });
        let id = store.add("emb", pre.clone()).unwrap();
        store.freeze_row(id, PAD);
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let rows = embedding_lookup(&mut tape, b[id], &[0, 2, 2, 4]);
        assert_eq!(tape.value(rows).row(0), &[0.0, 0.0, 0.0]);
        let loss = tape.sum(rows);
        let mut g = tape.backward(loss);
        let grads = b.grads(&store, &mut g);
        assert_eq!(grads[0].row(PAD), &[0.0; 3]);
        // duplicates accumulate
        assert_eq!(grads[0].row(2), &[2.0; 3]);
        Sgd { lr: 0.1 }.step(&mut store, &grads);
        let after = store.get(id);
        for r in 0..5 {
            let touched = r == 2 || r == 4;
            assert_eq!(after.row(r) != pre.row(r), touched, "row {r}");
        }
        let _ = vec![0];
    }
}
