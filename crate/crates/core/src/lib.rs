//! Graph collaborative filtering with semantic-profile alignment.
//!
//! The crate covers the numerical side of the pipeline: interaction corpora,
//! LightGCN/GCCF backbones with hand-derived gradients, contrastive and
//! masked-generative InfoNCE alignment against text-embedding vectors, Adam
//! training loops, all-rank evaluation and a planted-latent data generator.

pub mod align;
pub mod backbone;
pub mod corpus;
pub mod eval;
pub mod optim;
mod error;
pub mod par;
pub mod synth;

pub use error::{Error, Result};
