use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::PAD;
use crate::dataset::ChainExample;
use crate::nn::{Real, Tensor};
use crate::{Error, Result};

/// A bucket-uniform batch of chains.
///
/// Comments are laid out position-major: comment row `r = pos * chains + c`
/// holds position `pos` of chain `c`. Word-level tensors therefore have
/// `chains * chain_len` rows and the `rows` of chain position `pos` are the
/// contiguous range `pos * chains .. (pos + 1) * chains`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainBatch<T> {
    pub chains: usize,
    pub chain_len: usize,
    /// Padded word width; equals the longest comment in the batch, at most
    /// the bucket's `C_max`.
    pub width: usize,
    /// `tokens[t][r]`: token at word position `t` of comment row `r`.
    pub tokens: Vec<Vec<usize>>,
    pub word_mask: Vec<Vec<bool>>,
    pub lengths: Vec<usize>,
    /// `chain_mask[pos][c]`: chain `c` has a comment at `pos`.
    pub chain_mask: Vec<Vec<bool>>,
    pub gold: Vec<Option<usize>>,
    /// First-comment and parent targets, `rows x word_dim` each.
    pub targets: Option<(Tensor<T>, Tensor<T>)>,
    /// Pretrained comment vectors, `rows x comment_dim`.
    pub vectors: Option<Tensor<T>>,
}

/// PAD-fills `tokens` to `c_max`, dropping the tail beyond it.
pub fn pad_comment(tokens: &[usize], c_max: usize) -> (Vec<usize>, Vec<bool>) {
    let keep = tokens.len().min(c_max);
    let mut ids = tokens[..keep].to_vec();
    ids.resize(c_max, PAD);
    let mask = (0..c_max).map(|t| t < keep).collect();
    (ids, mask)
}

impl<T: Real> ChainBatch<T> {
    /// Lays out `examples` as chains of `chain_len` comments truncated to
    /// `c_max` tokens. Shorter chains are padded with empty, unlabelled
    /// comments.
    pub fn new(examples: &[&ChainExample], chain_len: usize, c_max: usize) -> Result<Self> {
        if examples.is_empty() || chain_len == 0 || c_max == 0 {
            return Err(Error::InvalidArgument(format!(
                "batch of {} chains, length {chain_len}, width {c_max}",
                examples.len()
            )));
        }
        if let Some(e) = examples.iter().find(|e| e.len() > chain_len) {
            return Err(Error::InvalidArgument(format!(
                "chain of {} comments in a length-{chain_len} batch",
                e.len()
            )));
        }
        let chains = examples.len();
        let rows = chains * chain_len;
        let comment = |r: usize| {
            let (pos, c) = (r / chains, r % chains);
            examples[c].tokens.get(pos).map(|t| &t[..t.len().min(c_max)])
        };
        let lengths: Vec<usize> = (0..rows).map(|r| comment(r).map_or(0, |t| t.len())).collect();
        let width = lengths.iter().copied().max().unwrap_or(0).max(1);
        let mut tokens = vec![vec![PAD; rows]; width];
        let mut word_mask = vec![vec![false; rows]; width];
        for r in 0..rows {
            if let Some(toks) = comment(r) {
                for (t, &tok) in toks.iter().enumerate() {
                    tokens[t][r] = tok;
                    word_mask[t][r] = true;
                }
            }
        }
        let chain_mask = (0..chain_len)
            .map(|pos| examples.iter().map(|e| pos < e.len()).collect())
            .collect();
        let gold = (0..rows)
            .map(|r| {
                let (pos, c) = (r / chains, r % chains);
                examples[c].gold.get(pos).copied().flatten().map(|a| a.code())
            })
            .collect();
        let targets = gather_targets(examples, chains, chain_len)?;
        let vectors = gather_vectors(examples, chains, chain_len)?;
        Ok(ChainBatch {
            chains,
            chain_len,
            width,
            tokens,
            word_mask,
            lengths,
            chain_mask,
            gold,
            targets,
            vectors,
        })
    }

    pub fn rows(&self) -> usize {
        self.chains * self.chain_len
    }

    /// Comment rows of chain position `pos`.
    pub fn position_rows(&self, pos: usize) -> core::ops::Range<usize> {
        pos * self.chains..(pos + 1) * self.chains
    }

    /// Rows holding a real comment.
    pub fn comment_mask(&self) -> Vec<bool> {
        (0..self.rows())
            .map(|r| self.chain_mask[r / self.chains][r % self.chains])
            .collect()
    }
}

fn gather_targets<T: Real>(
    examples: &[&ChainExample],
    chains: usize,
    chain_len: usize,
) -> Result<Option<(Tensor<T>, Tensor<T>)>> {
    let Some(dim) = examples
        .iter()
        .find_map(|e| e.targets.as_ref().and_then(|t| t.first()).map(|t| t.first.len()))
    else {
        return Ok(None);
    };
    let rows = chains * chain_len;
    let mut first = Tensor::zeros(rows, dim);
    let mut parent = Tensor::zeros(rows, dim);
    for (c, e) in examples.iter().enumerate() {
        let Some(targets) = &e.targets else {
            if e.is_empty() {
                continue;
            }
            return Err(Error::MissingInput("attention targets"));
        };
        for (pos, t) in targets.iter().enumerate().take(chain_len) {
            if t.first.len() != dim || t.parent.len() != dim {
                return Err(Error::shape("ChainBatch::new", format!("target width {} vs {dim}", t.first.len())));
            }
            let r = pos * chains + c;
            for (dst, &v) in first.row_mut(r).iter_mut().zip(&t.first) {
                *dst = T::lit(v as f64);
            }
            for (dst, &v) in parent.row_mut(r).iter_mut().zip(&t.parent) {
                *dst = T::lit(v as f64);
            }
        }
    }
    Ok(Some((first, parent)))
}

fn gather_vectors<T: Real>(examples: &[&ChainExample], chains: usize, chain_len: usize) -> Result<Option<Tensor<T>>> {
    let Some(dim) = examples
        .iter()
        .find_map(|e| e.vectors.as_ref().and_then(|v| v.iter().map(Vec::len).find(|&l| l > 0)))
    else {
        return Ok(None);
    };
    let mut out = Tensor::zeros(chains * chain_len, dim);
    for (c, e) in examples.iter().enumerate() {
        let Some(vectors) = &e.vectors else {
            if e.is_empty() {
                continue;
            }
            return Err(Error::MissingInput("comment vectors"));
        };
        for (pos, v) in vectors.iter().enumerate().take(chain_len) {
            if v.is_empty() {
                continue;
            }
            if v.len() != dim {
                return Err(Error::shape("ChainBatch::new", format!("comment vector width {} vs {dim}", v.len())));
            }
            for (dst, &x) in out.row_mut(pos * chains + c).iter_mut().zip(v) {
                *dst = T::lit(x as f64);
            }
        }
    }
    Ok(Some(out))
}
