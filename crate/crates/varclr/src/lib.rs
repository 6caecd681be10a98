//! Contrastive subword representations for program variable names.
//!
//! The pipeline has four stages, each usable as a library module or through
//! the `varclr` binary:
//!
//! 1. [`mining`] extracts weakly-supervised rename pairs (a variable name
//!    before and after a small commit) from unified diff streams.
//! 2. [`tokenizer`] canonicalizes identifiers into lowercase word tokens and
//!    segments them with a trainable byte-pair-encoding vocabulary.
//! 3. [`encoders`] + [`contrastive`] train an embedding-averaging or
//!    bidirectional-LSTM encoder on the mined pairs with a symmetric InfoNCE
//!    objective, Adam, gradient clipping, and validation early stopping.
//! 4. [`eval`] and [`retrieval`] score name pairs against human benchmarks
//!    (Spearman rank correlation), run top-k cosine search with Hit@K
//!    curves, and generate keyboard-typo datasets for spelling correction.
//!
//! All training and data generation is seeded and single-threaded by
//! default, so identical invocations produce byte-identical artifacts.

pub(crate) mod binio;
pub mod cli;
pub mod contrastive;
pub mod encoders;
pub mod eval;
pub mod manifest;
pub mod mining;
pub mod retrieval;
pub mod tokenizer;
pub(crate) mod util;

pub use contrastive::{train, TrainConfig, TrainOutcome};
pub use encoders::{Checkpoint, EncoderKind, EncoderParams};
pub use mining::RenamePair;
pub use tokenizer::{BpeVocab, CanonicalTokens, TokenSeq};

/// Any error produced by the pipeline stages, aggregated for callers that
/// drive several stages at once (the CLI, mainly).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tokenizer(#[from] tokenizer::TokenizerError),
    #[error(transparent)]
    Diff(#[from] mining::DiffError),
    #[error(transparent)]
    Encoder(#[from] encoders::EncoderError),
    #[error(transparent)]
    Train(#[from] contrastive::TrainError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Retrieval(#[from] retrieval::RetrievalError),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
