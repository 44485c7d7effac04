//! Synthetic household-individual population generation for census tracts.
//!
//! A small variational autoencoder is pretrained on state-level microdata
//! (households restructured into fixed-width rows of person slots, one-hot
//! encoded). Its decoder is then frozen and a trainable latent matrix is
//! optimized so that the decoded population matches a tract's marginal
//! distributions while staying close to real microdata records.
//!
//! Module map:
//!
//! - [`ingest`]: schema, microdata loading, restructuring, one-hot codec, marginals
//! - [`nn`]: layer primitives with analytic backward passes and a gradient checker
//! - [`vae`]: encoder/decoder model and its binary file format
//! - [`losses`]: BCE, focal, latent KL, decoupled BCE with norm-KL, marginal RMSE
//! - [`train`]: Lion optimizer, learning-rate schedule, pretraining and fine-tuning
//! - [`generate`]: synthetic inventories and record-level sanity rules
//! - [`eval`]: marginal/joint metrics, chi-square, DCR privacy, K-S test
//! - [`oracle`]: hierarchical ground-truth sampler used for self-testing
//! - [`cli`]: the `tractsynth` command-line front end

pub mod cli;
pub mod error;
pub mod eval;
pub mod generate;
pub mod ingest;
pub mod losses;
pub mod nn;
pub mod oracle;
pub mod par;
pub mod train;
pub mod vae;

pub use error::{Error, Result};
