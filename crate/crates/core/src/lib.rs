//! Evaluation of generative image models in discrete token space.
//!
//! The crate reads token datasets, builds unigram and spatial co-occurrence
//! statistics, compares them with Hellinger-based distances, trains a small
//! transformer that scores sequences without a reference, and provides the
//! feature-space baselines and rank-agreement tools used to validate them.

pub mod baselines;
mod block;
pub mod cmms;
pub mod diagnostics;
pub mod distances;
pub mod error;
pub mod eval;
pub mod exec;
pub mod histograms;
pub mod image;
pub mod synth;
pub mod token_io;
pub mod toy_tokenizer;

pub use error::{Error, Result};
pub use exec::Execution;
