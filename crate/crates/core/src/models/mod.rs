//! The tagging architectures.
//!
//! Every model maps a [`ChainBatch`] to one act distribution per comment row.
//! `mlp` looks at one reply pair at a time; `seqlstm` runs an LSTM over
//! pretrained comment vectors; `hlstm` learns comment vectors with a stacked
//! word LSTM and feeds them to a comment LSTM; `cnnlstm` swaps the word LSTM
//! for an n-gram convolution. The `-attn` variants scale word representations
//! by the word-relevance distribution.

mod batch;

pub use batch::{pad_comment, ChainBatch};

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::corpus::{DiscourseAct, PAD, UNK};
use crate::layers::{
    apply_relevance, conv_ngram_encoder, embedding_lookup, lstm_forward, relevance_distribution, AttentionParams,
    ConvParams, LstmParams,
};
use crate::nn::{init, Binding, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    Mlp,
    SeqLstm,
    Hlstm,
    HlstmAttn,
    CnnLstm,
    CnnLstmAttn,
}

impl Architecture {
    pub const ALL: [Architecture; 6] = [
        Architecture::Mlp,
        Architecture::SeqLstm,
        Architecture::Hlstm,
        Architecture::HlstmAttn,
        Architecture::CnnLstm,
        Architecture::CnnLstmAttn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Mlp => "mlp",
            Architecture::SeqLstm => "seqlstm",
            Architecture::Hlstm => "hlstm",
            Architecture::HlstmAttn => "hlstm-attn",
            Architecture::CnnLstm => "cnnlstm",
            Architecture::CnnLstmAttn => "cnnlstm-attn",
        }
    }

    /// Reads token ids (as opposed to pretrained comment vectors).
    pub fn uses_words(self) -> bool {
        !matches!(self, Architecture::Mlp | Architecture::SeqLstm)
    }

    pub fn uses_attention(self) -> bool {
        matches!(self, Architecture::HlstmAttn | Architecture::CnnLstmAttn)
    }

    pub fn uses_vectors(self) -> bool {
        !self.uses_words()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownArchitecture(s.to_string()))
    }
}

/// Dimensions of a model instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub vocab_size: usize,
    pub word_dim: usize,
    /// Width of pretrained comment vectors.
    pub comment_dim: usize,
    /// First (sequential) word LSTM.
    pub word_hidden: usize,
    /// Second (final-state) word LSTM; its output is the comment vector.
    pub sentence_hidden: usize,
    /// Comment-dimension LSTM.
    pub comment_hidden: usize,
    /// Filters per n-gram size.
    pub filters: usize,
    pub mlp_hidden: [usize; 2],
    pub classes: usize,
    /// Rows of the attention matrix `K`.
    pub c_max: usize,
}

impl ModelConfig {
    pub fn new(arch: Architecture, vocab_size: usize) -> Self {
        ModelConfig {
            arch,
            vocab_size,
            word_dim: 150,
            comment_dim: 700,
            word_hidden: 150,
            sentence_hidden: 200,
            comment_hidden: 200,
            filters: 100,
            mlp_hidden: [300, 100],
            classes: DiscourseAct::COUNT,
            c_max: 120,
        }
    }

    /// Uniform small sizes, for tests and toy runs.
    pub fn toy(arch: Architecture, vocab_size: usize, dim: usize, c_max: usize) -> Self {
        ModelConfig {
            arch,
            vocab_size,
            word_dim: dim,
            comment_dim: dim,
            word_hidden: dim,
            sentence_hidden: dim,
            comment_hidden: dim,
            filters: dim,
            mlp_hidden: [dim, dim],
            classes: DiscourseAct::COUNT,
            c_max,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    fn register<T: Real, R: Rng>(store: &mut ParamStore<T>, prefix: &str, input: usize, output: usize, rng: &mut R) -> Result<Self> {
        Ok(Dense {
            w: store.add(&format!("{prefix}.w"), init::glorot(input, output, rng))?,
            b: store.add(&format!("{prefix}.b"), Tensor::zeros(1, output))?,
        })
    }

    fn apply<T: Real>(&self, tape: &mut Tape<T>, b: &Binding, x: Var) -> Var {
        tape.affine(x, b[self.w], b[self.b])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Encoder {
    Lstm { first: LstmParams, second: LstmParams },
    Conv(ConvParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Layout {
    Mlp {
        hidden1: Dense,
        hidden2: Dense,
        out: Dense,
    },
    Seq {
        lstm: LstmParams,
        head: Dense,
    },
    Words {
        embed: ParamId,
        encoder: Encoder,
        attention: Option<AttentionParams>,
        lstm: LstmParams,
        head: Dense,
    },
}

pub const EMBEDDING: &str = "embed.words";
pub const ATTENTION: &str = "attn.k";

/// Graph outputs of a forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    /// `rows x classes`, position-major like the batch.
    pub probs: Var,
    /// `rows x width` relevance, attention architectures only.
    pub relevance: Option<Var>,
}

/// Values of an inference pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub probs: Tensor<T>,
    pub relevance: Option<Tensor<T>>,
}

impl<T: Real> Prediction<T> {
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.probs.rows()).map(|r| argmax(self.probs.row(r))).collect()
    }
}

pub(crate) fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Parameters and wiring for one architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    layout: Layout,
}

impl<T: Real> Model<T> {
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let c = &config;
        if c.classes == 0 || c.c_max == 0 {
            return Err(Error::InvalidArgument(format!("{} classes, c_max {}", c.classes, c.c_max)));
        }
        let mut store = ParamStore::new();
        let layout = match c.arch {
            Architecture::Mlp => Layout::Mlp {
                hidden1: Dense::register(&mut store, "mlp.h1", 2 * c.comment_dim + c.classes, c.mlp_hidden[0], rng)?,
                hidden2: Dense::register(&mut store, "mlp.h2", c.mlp_hidden[0], c.mlp_hidden[1], rng)?,
                out: Dense::register(&mut store, "mlp.out", c.mlp_hidden[1], c.classes, rng)?,
            },
            Architecture::SeqLstm => Layout::Seq {
                lstm: LstmParams::register(&mut store, "comment_lstm", c.comment_dim, c.comment_hidden, rng)?,
                head: Dense::register(&mut store, "head", c.comment_hidden, c.classes, rng)?,
            },
            arch => {
                if c.vocab_size <= UNK {
                    return Err(Error::InvalidArgument(String::from("empty vocabulary")));
                }
                let mut table = init::uniform(c.vocab_size, c.word_dim, 0.1, rng);
                table.row_mut(PAD).fill(T::zero());
                let embed = store.add(EMBEDDING, table)?;
                store.freeze_row(embed, PAD);
                let (encoder, out_dim) = match arch {
                    Architecture::Hlstm | Architecture::HlstmAttn => (
                        Encoder::Lstm {
                            first: LstmParams::register(&mut store, "word_lstm1", c.word_dim, c.word_hidden, rng)?,
                            second: LstmParams::register(&mut store, "word_lstm2", c.word_hidden, c.sentence_hidden, rng)?,
                        },
                        c.sentence_hidden,
                    ),
                    _ => {
                        let conv = ConvParams::register(&mut store, "conv", c.word_dim, c.filters, rng)?;
                        (Encoder::Conv(conv), conv.output_dim())
                    }
                };
                let attention = if arch.uses_attention() {
                    Some(AttentionParams::register(&mut store, ATTENTION, c.c_max, c.word_dim, rng)?)
                } else {
                    None
                };
                Layout::Words {
                    embed,
                    encoder,
                    attention,
                    lstm: LstmParams::register(&mut store, "comment_lstm", out_dim, c.comment_hidden, rng)?,
                    head: Dense::register(&mut store, "head", c.comment_hidden, c.classes, rng)?,
                }
            }
        };
        Ok(Model { config, store, layout })
    }

    pub fn arch(&self) -> Architecture {
        self.config.arch
    }

    /// Replaces the word embedding table; the padding row is forced to zero.
    pub fn set_word_embeddings(&mut self, table: &Tensor<T>) -> Result<()> {
        let Layout::Words { embed, .. } = self.layout else {
            return Err(Error::InvalidArgument(format!("{} has no word embeddings", self.arch())));
        };
        let mut t = table.clone();
        if t.rows() > PAD {
            t.row_mut(PAD).fill(T::zero());
        }
        self.store.set(embed, t)
    }

    /// A fresh model for padded width `c_max` that inherits every tensor of
    /// `self` whose name and shape match. `K` keeps its overlapping rows;
    /// added rows come from the fresh initialization.
    pub fn transfer<R: Rng>(&self, c_max: usize, rng: &mut R) -> Result<Self> {
        let mut config = self.config.clone();
        config.c_max = c_max;
        let mut next = Model::new(config, rng)?;
        for id in self.store.ids() {
            let name = self.store.name(id);
            let Some(to) = next.store.id(name) else { continue };
            let src = self.store.get(id);
            if src.shape() == next.store.get(to).shape() {
                next.store.set(to, src.clone())?;
            } else if name == ATTENTION && src.cols() == next.store.get(to).cols() {
                let dst = next.store.get_mut(to);
                for r in 0..src.rows().min(dst.rows()) {
                    dst.row_mut(r).copy_from_slice(src.row(r));
                }
            }
        }
        Ok(next)
    }

    /// Builds the model for `config` and overwrites every tensor by name.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut model = Model::new(config, &mut crate::rng::seeded(0, 0))?;
        if tensors.len() != model.store.len() {
            return Err(Error::InvalidArgument(format!(
                "{} tensors for a model with {}",
                tensors.len(),
                model.store.len()
            )));
        }
        for (name, t) in tensors {
            let id = model
                .store
                .id(&name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown tensor {name}")))?;
            model.store.set(id, t)?;
        }
        Ok(model)
    }

    pub fn forward(&self, tape: &mut Tape<T>, b: &Binding, batch: &ChainBatch<T>) -> Result<Forward> {
        self.check(batch)?;
        match self.layout {
            Layout::Mlp { .. } => {
                let prev = shifted_gold(batch);
                let input = self.mlp_input(batch, 0..batch.chain_len, &prev)?;
                let x = tape.constant(input);
                Ok(Forward {
                    probs: self.mlp_forward(tape, b, x),
                    relevance: None,
                })
            }
            Layout::Seq { .. } => self.seq_lstm_forward(tape, b, batch),
            Layout::Words { encoder, .. } => match encoder {
                Encoder::Lstm { .. } => self.hlstm_forward(tape, b, batch, None),
                Encoder::Conv(_) => self.cnn_lstm_forward(tape, b, batch, None),
            },
        }
    }

    /// Word-level forward with the relevance replaced by `relevance`
    /// (`rows x width`). Attention architectures only.
    pub fn forward_with_relevance(
        &self,
        tape: &mut Tape<T>,
        b: &Binding,
        batch: &ChainBatch<T>,
        relevance: &Tensor<T>,
    ) -> Result<Forward> {
        self.check(batch)?;
        match self.layout {
            Layout::Words {
                encoder,
                attention: Some(_),
                ..
            } => match encoder {
                Encoder::Lstm { .. } => self.hlstm_forward(tape, b, batch, Some(relevance)),
                Encoder::Conv(_) => self.cnn_lstm_forward(tape, b, batch, Some(relevance)),
            },
            _ => Err(Error::InvalidArgument(format!("{} has no attention", self.arch()))),
        }
    }

    /// Weighted mean cross-entropy over labelled rows. `class_weights`
    /// defaults to uniform.
    pub fn loss(
        &self,
        tape: &mut Tape<T>,
        b: &Binding,
        batch: &ChainBatch<T>,
        class_weights: Option<&[T]>,
    ) -> Result<(Var, Forward)> {
        let out = self.forward(tape, b, batch)?;
        let weights: Vec<T> = batch
            .gold
            .iter()
            .map(|g| match (g, class_weights) {
                (Some(g), Some(w)) => w[*g],
                (Some(_), None) => T::one(),
                (None, _) => T::zero(),
            })
            .collect();
        Ok((tape.cross_entropy(out.probs, &batch.gold, &weights), out))
    }

    /// Inference. The MLP feeds its own previous prediction forward.
    pub fn predict(&self, batch: &ChainBatch<T>) -> Result<Prediction<T>> {
        self.check(batch)?;
        let mut tape = Tape::new();
        let b = self.store.bind_frozen(&mut tape);
        if let Layout::Mlp { .. } = self.layout {
            let mut probs = Tensor::zeros(batch.rows(), self.config.classes);
            let mut prev = vec![None; batch.rows()];
            for pos in 0..batch.chain_len {
                let input = self.mlp_input(batch, pos..pos + 1, &prev)?;
                let x = tape.constant(input);
                let p = self.mlp_forward(&mut tape, &b, x);
                let pv = tape.value(p);
                for (i, r) in batch.position_rows(pos).enumerate() {
                    probs.row_mut(r).copy_from_slice(pv.row(i));
                    if pos + 1 < batch.chain_len {
                        prev[r + batch.chains] = Some(argmax(pv.row(i)));
                    }
                }
            }
            return Ok(Prediction { probs, relevance: None });
        }
        let out = self.forward(&mut tape, &b, batch)?;
        Ok(Prediction {
            probs: tape.value(out.probs).clone(),
            relevance: out.relevance.map(|r| tape.value(r).clone()),
        })
    }

    fn check(&self, batch: &ChainBatch<T>) -> Result<()> {
        let c = &self.config;
        if c.arch.uses_words() {
            if batch.width > c.c_max && c.arch.uses_attention() {
                return Err(Error::BucketMismatch {
                    len: batch.width,
                    c_max: c.c_max,
                });
            }
            if let Some(&t) = batch.tokens.iter().flatten().find(|&&t| t >= c.vocab_size) {
                return Err(Error::shape("Model::forward", format!("token {t} outside vocabulary of {}", c.vocab_size)));
            }
        } else {
            match &batch.vectors {
                None => return Err(Error::MissingInput("comment vectors")),
                Some(v) if v.cols() != c.comment_dim => {
                    return Err(Error::shape("Model::forward", format!("comment vectors of width {}, expected {}", v.cols(), c.comment_dim)))
                }
                _ => {}
            }
        }
        if c.arch.uses_attention() {
            match &batch.targets {
                None => return Err(Error::MissingInput("attention targets")),
                Some((f, _)) if f.cols() != c.word_dim => {
                    return Err(Error::shape("Model::forward", format!("targets of width {}, expected {}", f.cols(), c.word_dim)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Rows `[C_prev, onehot(D_prev), C_cur]` for the given chain positions;
    /// `prev[r]` is the act assumed for the comment preceding row `r`.
    fn mlp_input(&self, batch: &ChainBatch<T>, positions: core::ops::Range<usize>, prev: &[Option<usize>]) -> Result<Tensor<T>> {
        let vectors = batch.vectors.as_ref().ok_or(Error::MissingInput("comment vectors"))?;
        let (d, k) = (self.config.comment_dim, self.config.classes);
        let rows: Vec<usize> = positions.flat_map(|p| batch.position_rows(p)).collect();
        let mut input = Tensor::zeros(rows.len(), 2 * d + k);
        for (i, &r) in rows.iter().enumerate() {
            let out = input.row_mut(i);
            if r >= batch.chains {
                out[..d].copy_from_slice(vectors.row(r - batch.chains));
                if let Some(a) = prev[r] {
                    out[d + a] = T::one();
                }
            }
            out[d + k..].copy_from_slice(vectors.row(r));
        }
        Ok(input)
    }

    /// `softmax(σ(σ(I W1 + B1) W2 + B2) W3 + B3)`.
    fn mlp_forward(&self, tape: &mut Tape<T>, b: &Binding, x: Var) -> Var {
        let Layout::Mlp { hidden1, hidden2, out } = self.layout else {
            unreachable!("mlp layout")
        };
        let z1 = hidden1.apply(tape, b, x);
        let h1 = tape.sigmoid(z1);
        let z2 = hidden2.apply(tape, b, h1);
        let h2 = tape.sigmoid(z2);
        let z3 = out.apply(tape, b, h2);
        tape.softmax_rows(z3, None)
    }

    fn seq_lstm_forward(&self, tape: &mut Tape<T>, b: &Binding, batch: &ChainBatch<T>) -> Result<Forward> {
        let Layout::Seq { lstm, head } = self.layout else {
            unreachable!("seq layout")
        };
        let vectors = batch.vectors.as_ref().ok_or(Error::MissingInput("comment vectors"))?;
        let all = tape.constant(vectors.clone());
        let seq: Vec<Var> = (0..batch.chain_len)
            .map(|pos| {
                let ids: Vec<usize> = batch.position_rows(pos).collect();
                tape.gather(all, &ids, None)
            })
            .collect();
        Ok(Forward {
            probs: self.comment_head(tape, b, &lstm, head, &seq, batch)?,
            relevance: None,
        })
    }

    fn hlstm_forward(
        &self,
        tape: &mut Tape<T>,
        b: &Binding,
        batch: &ChainBatch<T>,
        fixed: Option<&Tensor<T>>,
    ) -> Result<Forward> {
        let Layout::Words {
            encoder: Encoder::Lstm { first, second },
            lstm,
            head,
            ..
        } = self.layout
        else {
            unreachable!("hlstm layout")
        };
        let words = self.embed(tape, b, batch);
        let relevance = self.relevance(tape, b, batch, &words, fixed)?;
        let mut hidden = lstm_forward(tape, b, &first, &words, Some(&batch.word_mask), true)?.into_sequence();
        if let Some(p) = relevance {
            hidden = apply_relevance(tape, p, &hidden)?;
        }
        let comments = lstm_forward(tape, b, &second, &hidden, Some(&batch.word_mask), false)?.last();
        let seq = split_positions(tape, comments, batch);
        Ok(Forward {
            probs: self.comment_head(tape, b, &lstm, head, &seq, batch)?,
            relevance,
        })
    }

    fn cnn_lstm_forward(
        &self,
        tape: &mut Tape<T>,
        b: &Binding,
        batch: &ChainBatch<T>,
        fixed: Option<&Tensor<T>>,
    ) -> Result<Forward> {
        let Layout::Words {
            encoder: Encoder::Conv(conv),
            lstm,
            head,
            ..
        } = self.layout
        else {
            unreachable!("cnnlstm layout")
        };
        let mut words = self.embed(tape, b, batch);
        let relevance = self.relevance(tape, b, batch, &words, fixed)?;
        if let Some(p) = relevance {
            words = apply_relevance(tape, p, &words)?;
        }
        let lengths: Vec<usize> = batch.lengths.iter().map(|&l| l.min(batch.width)).collect();
        let comments = conv_ngram_encoder(tape, b, &conv, &words, &lengths)?;
        let seq = split_positions(tape, comments, batch);
        Ok(Forward {
            probs: self.comment_head(tape, b, &lstm, head, &seq, batch)?,
            relevance,
        })
    }

    fn embed(&self, tape: &mut Tape<T>, b: &Binding, batch: &ChainBatch<T>) -> Vec<Var> {
        let Layout::Words { embed, .. } = self.layout else {
            unreachable!("word layout")
        };
        batch.tokens.iter().map(|ids| embedding_lookup(tape, b[embed], ids)).collect()
    }

    fn relevance(
        &self,
        tape: &mut Tape<T>,
        b: &Binding,
        batch: &ChainBatch<T>,
        words: &[Var],
        fixed: Option<&Tensor<T>>,
    ) -> Result<Option<Var>> {
        let Layout::Words {
            attention: Some(attn), ..
        } = self.layout
        else {
            return Ok(None);
        };
        if let Some(p) = fixed {
            if p.shape() != (batch.rows(), batch.width) {
                return Err(Error::shape("forward_with_relevance", format!("{:?} relevance", p.shape())));
            }
            return Ok(Some(tape.constant(p.clone())));
        }
        let (first, parent) = batch.targets.as_ref().ok_or(Error::MissingInput("attention targets"))?;
        let f = tape.constant(first.clone());
        let p = tape.constant(parent.clone());
        relevance_distribution(tape, b, &attn, words, f, p, &batch.word_mask).map(Some)
    }

    /// Comment LSTM over chain positions, then the shared dense softmax.
    fn comment_head(
        &self,
        tape: &mut Tape<T>,
        b: &Binding,
        lstm: &LstmParams,
        head: Dense,
        seq: &[Var],
        batch: &ChainBatch<T>,
    ) -> Result<Var> {
        let states = lstm_forward(tape, b, lstm, seq, Some(&batch.chain_mask), true)?.into_sequence();
        let h = tape.concat_rows(&states);
        let z = head.apply(tape, b, h);
        Ok(tape.softmax_rows(z, None))
    }
}

/// Per-position slices of a `rows x d` comment matrix.
fn split_positions<T: Real>(tape: &mut Tape<T>, comments: Var, batch: &ChainBatch<T>) -> Vec<Var> {
    (0..batch.chain_len)
        .map(|pos| {
            let ids: Vec<usize> = batch.position_rows(pos).collect();
            tape.gather(comments, &ids, None)
        })
        .collect()
}

/// Gold act of each row's predecessor (teacher forcing).
fn shifted_gold<T: Real>(batch: &ChainBatch<T>) -> Vec<Option<usize>> {
    (0..batch.rows())
        .map(|r| if r >= batch.chains { batch.gold[r - batch.chains] } else { None })
        .collect()
}

#[cfg(test)]
mod tests;
