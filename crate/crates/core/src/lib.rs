//! Weakly-supervised prediction of an image's political leaning from
//! precomputed image features, using article text as privileged information
//! at training time only.
//!
//! The pipeline: [`corpus`] ingestion and weak labels, [`dedup`] near-duplicate
//! removal over an approximate kNN graph, [`doc2vec`] paragraph-vector
//! embeddings of the articles, the two-stage [`classifier`], and [`eval`]
//! breakdowns and ablations.

mod binio;
pub mod classifier;
#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod corpus;
pub mod dedup;
pub mod doc2vec;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod observe;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
