//! Alignment of word-embedding spaces.
//!
//! The crate covers the whole pipeline used to study when two embedding
//! spaces can be aligned without supervision:
//!
//! - [`embedding`]: vocabularies, embedding spaces, word2vec text I/O and
//!   normalization transforms.
//! - [`corpus`]: text normalization, co-occurrence counting, PPMI + SVD and
//!   skip-gram negative-sampling trainers.
//! - [`geometry`]: dispersion and frequency-bias diagnostics.
//! - [`procrustes`]: supervised orthogonal alignment.
//! - [`gan`]: adversarial alignment with a linear generator, plus
//!   dictionary-induction refinement.
//! - [`retrieval`]: word-translation retrieval and precision at k.
//! - [`experiment`]: grid, learning-curve and loss-curve harnesses.
//!
//! Alignment maps act on column vectors, `x -> W x`. With embeddings stored
//! as rows this means a mapped source matrix is `X W^T`.

pub mod config;
pub mod corpus;
pub mod embedding;
mod error;
pub mod experiment;
pub mod gan;
pub mod geometry;
pub mod linalg;
pub mod procrustes;
pub mod retrieval;
pub mod seed;
pub mod synth;

pub use crate::embedding::{EmbeddingSpace, SeedDictionary, Vocabulary};
pub use crate::error::{Error, Result};
pub use crate::procrustes::AlignmentMap;

/// Version string recorded in experiment run records.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
