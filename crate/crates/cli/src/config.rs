//! Run configuration: every tunable, serialized next to each output.

use std::path::Path;

use anyhow::{bail, Context, Result};
use discourse_core::embed::EmbedConfig;
use discourse_core::nn::Adam;
use discourse_core::train::{Stratify, TrainConfig};
use discourse_core::{Architecture, ModelConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub arch: String,
    pub word_dim: usize,
    pub comment_dim: usize,
    pub word_hidden: usize,
    pub sentence_hidden: usize,
    pub comment_hidden: usize,
    pub filters: usize,
    pub mlp_hidden: [usize; 2],
    pub min_count: u64,
    pub folds: usize,
    pub min_chain_len: usize,
    /// `length` or `first-label`.
    pub stratify: String,
    pub seed: u64,
    pub deterministic: bool,
    pub class_weights: bool,
    /// `heuristic` or `identity`.
    pub selector: String,
    /// `f32` or `f64`.
    pub precision: String,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub c_max_cap: usize,
    pub val_fraction: f64,
    pub embed_window: usize,
    pub embed_negatives: usize,
    pub embed_epochs: usize,
    pub embed_lr: f64,
    /// Seconds per window of the temporal series.
    pub window: i64,
    pub humor_negative: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::new(Architecture::HlstmAttn, 0);
        let t = TrainConfig::default();
        let e = EmbedConfig::words();
        RunConfig {
            arch: m.arch.name().to_string(),
            word_dim: m.word_dim,
            comment_dim: m.comment_dim,
            word_hidden: m.word_hidden,
            sentence_hidden: m.sentence_hidden,
            comment_hidden: m.comment_hidden,
            filters: m.filters,
            mlp_hidden: m.mlp_hidden,
            min_count: 2,
            folds: 5,
            min_chain_len: 2,
            stratify: "length".into(),
            seed: t.seed,
            deterministic: false,
            class_weights: t.class_weights,
            selector: "heuristic".into(),
            precision: "f32".into(),
            epochs: t.epochs,
            patience: t.patience,
            batch_size: t.batch_size,
            lr: t.optimizer.lr,
            c_max_cap: t.c_max_cap,
            val_fraction: t.val_fraction,
            embed_window: e.window,
            embed_negatives: e.negatives,
            embed_epochs: e.epochs,
            embed_lr: e.lr,
            window: discourse_core::analyze::DAY,
            humor_negative: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture()?;
        self.stratify()?;
        if !matches!(self.selector.as_str(), "heuristic" | "identity") {
            bail!("unknown selector `{}`", self.selector);
        }
        if !matches!(self.precision.as_str(), "f32" | "f64") {
            bail!("unknown precision `{}`", self.precision);
        }
        if self.folds < 2 {
            bail!("need at least 2 folds");
        }
        if self.min_chain_len < 1 {
            bail!("min chain length must be at least 1");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            bail!("validation fraction must be in [0, 1)");
        }
        Ok(())
    }

    pub fn architecture(&self) -> Result<Architecture> {
        Ok(self.arch.parse()?)
    }

    pub fn stratify(&self) -> Result<Stratify> {
        match self.stratify.as_str() {
            "length" => Ok(Stratify::Length),
            "first-label" => Ok(Stratify::FirstLabel),
            s => bail!("unknown stratification `{s}`"),
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let mut m = ModelConfig::new(self.architecture()?, vocab_size);
        m.word_dim = self.word_dim;
        m.comment_dim = self.comment_dim;
        m.word_hidden = self.word_hidden;
        m.sentence_hidden = self.sentence_hidden;
        m.comment_hidden = self.comment_hidden;
        m.filters = self.filters;
        m.mlp_hidden = self.mlp_hidden;
        m.c_max = self.c_max_cap;
        Ok(m)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            optimizer: Adam {
                lr: self.lr,
                ..Adam::default()
            },
            class_weights: self.class_weights,
            c_max_cap: self.c_max_cap,
            val_fraction: self.val_fraction,
            seed: self.seed,
        }
    }

    pub fn word_embed_config(&self) -> EmbedConfig {
        EmbedConfig {
            dim: self.word_dim,
            window: self.embed_window,
            negatives: self.embed_negatives,
            epochs: self.embed_epochs,
            lr: self.embed_lr,
            seed: self.seed,
        }
    }

    pub fn comment_embed_config(&self) -> EmbedConfig {
        EmbedConfig {
            dim: self.comment_dim,
            ..self.word_embed_config()
        }
    }
}
