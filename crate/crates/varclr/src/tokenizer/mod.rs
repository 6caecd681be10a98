//! Identifier tokenization: canonical word splitting plus byte-pair
//! subword encoding.
//!
//! `canonicalize` turns a raw identifier into lowercase word tokens
//! (`"maxIteration"` and `"max_iteration"` both become `["max",
//! "iteration"]`). A [`BpeVocab`] trained on such tokens then segments each
//! word into subwords, with `"##"` marking non-initial pieces
//! (`"sendmsg"` → `["send", "##msg"]` given a suitable corpus). Character
//! fallback keeps segmentation total: no input is ever out-of-vocabulary.

mod bpe;
mod canonical;

pub use bpe::{train_bpe, BpeVocab, MergeRule, CONTINUATION_MARKER};
pub use canonical::{canonicalize, CanonicalTokens};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TokenizerError {
    #[error("empty identifier")]
    EmptyName,
    #[error("identifier `{0}` contains no letters or digits")]
    NoTokens(String),
    #[error("identifier `{name}` contains unsupported character `{ch}`")]
    InvalidCharacter { name: String, ch: char },
    #[error("cannot train a vocabulary on an empty corpus")]
    EmptyCorpus,
    #[error("target vocab size {target} does not exceed the base alphabet size {base}")]
    VocabTooSmall { target: usize, base: usize },
    #[error("subword `{0}` is not in the vocabulary")]
    UnknownToken(String),
    #[error("vocab file line {line}: {message}")]
    VocabFormat { line: usize, message: String },
}

/// A variable name after canonicalization and subword encoding; the unit of
/// model input. `ids` and `surface` are parallel and each id maps back to
/// its surface string through the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub surface: Vec<String>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Canonicalize `name` and encode every word with `vocab`, concatenating
/// the per-word subword lists. Total for any non-empty identifier made of
/// ASCII letters, digits, and underscores.
pub fn tokenize(name: &str, vocab: &BpeVocab) -> Result<TokenSeq, TokenizerError> {
    let words = canonicalize(name)?;
    let mut ids = Vec::new();
    let mut surface = Vec::new();
    for word in words.tokens() {
        for sub in vocab.encode_subwords(word) {
            let id = vocab
                .token_id(&sub)
                .ok_or_else(|| TokenizerError::UnknownToken(sub.clone()))?;
            ids.push(id);
            surface.push(sub);
        }
    }
    Ok(TokenSeq { ids, surface })
}
