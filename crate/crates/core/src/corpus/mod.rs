//! Desk-scale embedding trainers.
//!
//! Raw text goes through [`preprocess`], is interned into a [`Corpus`], and
//! is then turned into either a PPMI + truncated SVD space
//! ([`train_ppmi_svd`]) or a skip-gram negative-sampling space
//! ([`train_sgns`]).

mod cooc;
mod ppmi;
mod preprocess;
mod sgns;

pub use cooc::{count_cooccurrences, CoocMatrix};
pub use ppmi::{factorize_ppmi, ppmi_matrix, train_ppmi_svd, PpmiSvd};
pub use preprocess::{preprocess, preprocess_bytes, preprocess_with, Corpus, CorpusStats};
pub use sgns::{
    sgns_gradients, sgns_objective, train_sgns, train_sgns_corpus, SgnsConfig, SgnsGradients,
    SgnsModel,
};
