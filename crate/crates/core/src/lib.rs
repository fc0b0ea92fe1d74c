//! Discourse-act tagging of comment chains extracted from threaded discussions.
//!
//! This crate holds the algorithmic core and needs only `alloc`: corpus
//! structures and statistics, embedding pretraining, a small reverse-mode
//! autodiff tape, the recurrent/convolutional layers with word-relevance
//! attention, the five tagging architectures, the bucketed training protocol,
//! metrics, and the discussion analyses. File formats and the command-line
//! runner live in the `discourse-chain` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analyze;
pub mod corpus;
pub mod dataset;
pub mod embed;
mod error;
pub mod eval;
pub mod layers;
pub mod models;
pub mod nn;
pub mod rng;
pub mod train;

pub use corpus::{Chain, Comment, DiscourseAct, IdfKind, IdfTable, Thread, Vocab};
pub use error::Error;

pub use models::{Architecture, Model, ModelConfig};
pub use nn::{Real, Tensor};

pub type Result<T, E = Error> = core::result::Result<T, E>;
