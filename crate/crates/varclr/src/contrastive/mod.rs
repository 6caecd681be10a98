//! Contrastive pre-training on rename pairs: symmetric InfoNCE over
//! in-batch negatives, Adam with global-norm gradient clipping, and
//! validation early stopping.

mod adam;
mod loss;
mod trainer;

pub use adam::{adam_step, clip_gradients, AdamConfig, AdamState};
pub use loss::{
    info_nce, info_nce_from_sims, symmetric_loss, symmetric_loss_with_grad, BatchSims,
    SymmetricLossGrad,
};
pub use trainer::{train, EpochLog, TrainConfig, TrainOutcome};

use thiserror::Error;

use crate::encoders::EncoderError;
use crate::tokenizer::TokenizerError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("temperature must be positive")]
    NonPositiveTemperature,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("query and key batches have different sizes ({q} vs {k})")]
    BatchSizeMismatch { q: usize, k: usize },
    #[error("vector dimensions disagree within the batch")]
    DimMismatch,
    #[error("row {row} of the {side} batch is not unit-norm (norm {norm})")]
    NonUnitRow {
        side: &'static str,
        row: usize,
        norm: f64,
    },
    #[error("need at least 2 training pairs, got {0}")]
    TooFewPairs(usize),
    #[error("batch size must be at least 2")]
    BatchTooSmall,
    #[error("validation fraction must be in (0, 1)")]
    BadValidationFraction,
    #[error("data fraction must be in (0, 1]")]
    BadDataFraction,
    #[error("cannot tokenize `{name}`: {source}")]
    Tokenize {
        name: String,
        source: TokenizerError,
    },
    #[error("encoding of `{name}` has zero norm and cannot be normalized")]
    ZeroNorm { name: String },
    #[error("optimizer state holds {state} parameters, model has {params}")]
    ShapeMismatch { state: usize, params: usize },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}
