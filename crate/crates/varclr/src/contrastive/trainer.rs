//! The pre-training loop: seeded shuffling, in-batch negatives, symmetric
//! InfoNCE, Adam, and early stopping on validation loss.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{symmetric_loss, symmetric_loss_with_grad};
use super::TrainError;
use crate::encoders::{
    backward, l2_normalize, l2_normalize_backward, Checkpoint, CheckpointMeta, EmbeddingTable,
    EncoderKind, EncoderParams, Trace,
};
use crate::mining::RenamePair;
use crate::tokenizer::{tokenize, BpeVocab, TokenSeq};

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    /// Pairs per mini-batch; also the number of in-batch negatives plus one.
    pub batch_size: usize,
    /// Softmax temperature τ.
    pub temperature: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm bound.
    pub clip_norm: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    /// Fraction of pairs held out for validation, split once before
    /// training with the seeded shuffle.
    pub validation_fraction: f64,
    pub seed: u64,
    pub embed_dim: usize,
    /// Per-direction LSTM hidden size; also the projected output size.
    pub hidden_dim: usize,
    /// Fraction of the training split actually used, for data-size
    /// ablations. The validation split is taken first, so it is identical
    /// across fractions under the same seed.
    pub data_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1024,
            temperature: 0.05,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 1.0,
            max_epochs: 30,
            patience: 10,
            validation_fraction: 0.05,
            seed: 0,
            embed_dim: 768,
            hidden_dim: 150,
            data_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            clip_norm: self.clip_norm,
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

/// The checkpoint with the best validation loss plus the full epoch log
/// and the per-epoch in-batch discrimination accuracy.
#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    pub train_accuracy: Vec<f64>,
    pub train_pairs: usize,
    pub val_pairs: usize,
}

struct EncodedPair {
    query: TokenSeq,
    key: TokenSeq,
}

fn tokenize_pairs(pairs: &[RenamePair], vocab: &BpeVocab) -> Result<Vec<EncodedPair>, TrainError> {
    pairs
        .iter()
        .map(|p| {
            let query = tokenize(&p.before, vocab).map_err(|source| TrainError::Tokenize {
                name: p.before.clone(),
                source,
            })?;
            let key = tokenize(&p.after, vocab).map_err(|source| TrainError::Tokenize {
                name: p.after.clone(),
                source,
            })?;
            Ok(EncodedPair { query, key })
        })
        .collect()
}

struct BatchForward {
    raw_q: Vec<Vec<f64>>,
    raw_k: Vec<Vec<f64>>,
    norm_q: Vec<Vec<f64>>,
    norm_k: Vec<Vec<f64>>,
    traces_q: Vec<Trace>,
    traces_k: Vec<Trace>,
}

fn forward_batch(
    params: &EncoderParams,
    pairs: &[EncodedPair],
    idx: &[usize],
    names: impl Fn(usize, bool) -> String,
) -> Result<BatchForward, TrainError> {
    let mut fwd = BatchForward {
        raw_q: Vec::with_capacity(idx.len()),
        raw_k: Vec::with_capacity(idx.len()),
        norm_q: Vec::with_capacity(idx.len()),
        norm_k: Vec::with_capacity(idx.len()),
        traces_q: Vec::with_capacity(idx.len()),
        traces_k: Vec::with_capacity(idx.len()),
    };
    for (slot, &i) in idx.iter().enumerate() {
        let (raw_q, trace_q) = params.encode_traced(&pairs[i].query)?;
        let (raw_k, trace_k) = params.encode_traced(&pairs[i].key)?;
        let norm_q = l2_normalize(&raw_q).map_err(|_| TrainError::ZeroNorm {
            name: names(slot, true),
        })?;
        let norm_k = l2_normalize(&raw_k).map_err(|_| TrainError::ZeroNorm {
            name: names(slot, false),
        })?;
        fwd.raw_q.push(raw_q);
        fwd.raw_k.push(raw_k);
        fwd.norm_q.push(norm_q);
        fwd.norm_k.push(norm_k);
        fwd.traces_q.push(trace_q);
        fwd.traces_k.push(trace_k);
    }
    Ok(fwd)
}

/// Validation loss: fixed-order batches of `batch_size`, weighted by batch
/// size. Singleton tail batches contribute their exact loss of zero.
fn validation_loss(
    params: &EncoderParams,
    pairs: &[EncodedPair],
    idx: &[usize],
    batch_size: usize,
    tau: f64,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in idx.chunks(batch_size) {
        let fwd = forward_batch(params, pairs, chunk, |_, _| "validation pair".to_string())?;
        let loss = symmetric_loss(&fwd.norm_q, &fwd.norm_k, tau)?;
        total += loss * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count as f64)
}

/// Contrastively pre-train an encoder on rename pairs.
///
/// Splits off a seeded validation fraction, then per epoch: shuffle, batch,
/// encode both sides, normalize, take the symmetric InfoNCE loss,
/// backpropagate, clip, and apply Adam. Stops when validation loss fails to
/// improve for more than `patience` epochs or `max_epochs` is reached, and
/// returns the parameters from the best validation epoch. Identical inputs,
/// configuration, and seed produce a byte-identical checkpoint.
pub fn train(
    pairs: &[RenamePair],
    vocab: &BpeVocab,
    kind: EncoderKind,
    config: &TrainConfig,
    init_table: Option<EmbeddingTable>,
) -> Result<TrainOutcome, TrainError> {
    if pairs.len() < 2 {
        return Err(TrainError::TooFewPairs(pairs.len()));
    }
    if config.batch_size < 2 {
        return Err(TrainError::BatchTooSmall);
    }
    if config.temperature <= 0.0 {
        return Err(TrainError::NonPositiveTemperature);
    }
    if !(config.validation_fraction > 0.0 && config.validation_fraction < 1.0) {
        return Err(TrainError::BadValidationFraction);
    }
    if !(config.data_fraction > 0.0 && config.data_fraction <= 1.0) {
        return Err(TrainError::BadDataFraction);
    }

    let encoded = tokenize_pairs(pairs, vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut params = match kind {
        EncoderKind::Avg => EncoderParams::new_avg(vocab.vocab_size(), config.embed_dim, &mut rng),
        EncoderKind::Lstm => EncoderParams::new_lstm(
            vocab.vocab_size(),
            config.embed_dim,
            config.hidden_dim,
            config.hidden_dim,
            &mut rng,
        ),
    };
    if let Some(table) = init_table {
        if table.dim() != config.embed_dim || table.vocab_size() != vocab.vocab_size() {
            return Err(TrainError::Encoder(
                crate::encoders::EncoderError::DimensionMismatch {
                    expected: vocab.vocab_size() * config.embed_dim,
                    got: table.vocab_size() * table.dim(),
                },
            ));
        }
        *params.table_mut() = table;
    }

    // Validation split first (identical across data fractions), then the
    // ablation subsample on what remains.
    let n = encoded.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let val_count = ((n as f64 * config.validation_fraction).round() as usize)
        .clamp(1, n.saturating_sub(2).max(1));
    let val_idx: Vec<usize> = order[..val_count].to_vec();
    let pool = &order[val_count..];
    let keep = ((pool.len() as f64 * config.data_fraction).round() as usize)
        .clamp(2.min(pool.len()), pool.len());
    let mut train_idx: Vec<usize> = pool[..keep].to_vec();

    let tau = config.temperature;
    let adam_cfg = config.adam();
    let mut adam = AdamState::new(params.param_count());
    let mut grads = params.zero_grads();

    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0u32;
    let mut bad_streak = 0usize;
    let mut log = Vec::new();
    let mut accuracy = Vec::new();

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        train_idx.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut example_count = 0usize;
        let mut correct = 0.0;
        let mut acc_batches = 0usize;
        for chunk in train_idx.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue; // a singleton batch carries no negative signal
            }
            let fwd = forward_batch(&params, &encoded, chunk, |slot, is_query| {
                let pair = &pairs[chunk[slot]];
                if is_query {
                    pair.before.clone()
                } else {
                    pair.after.clone()
                }
            })?;
            let result = symmetric_loss_with_grad(&fwd.norm_q, &fwd.norm_k, tau)?;
            loss_sum += result.loss * chunk.len() as f64;
            example_count += chunk.len();
            correct += result.sims.discrimination_accuracy() * chunk.len() as f64;
            acc_batches += chunk.len();

            grads.zero();
            for slot in 0..chunk.len() {
                let up_q = l2_normalize_backward(&fwd.raw_q[slot], &result.d_queries[slot])?;
                backward(&params, &fwd.traces_q[slot], &up_q, &mut grads)?;
                let up_k = l2_normalize_backward(&fwd.raw_k[slot], &result.d_keys[slot])?;
                backward(&params, &fwd.traces_k[slot], &up_k, &mut grads)?;
            }
            adam_step(&mut params, &mut grads, &mut adam, &adam_cfg)?;
        }

        let train_loss = if example_count > 0 {
            loss_sum / example_count as f64
        } else {
            f64::NAN
        };
        accuracy.push(if acc_batches > 0 {
            correct / acc_batches as f64
        } else {
            0.0
        });

        let val_loss = validation_loss(&params, &encoded, &val_idx, config.batch_size, tau)?;
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        });

        if val_loss < best_val {
            best_val = val_loss;
            best_params = params.clone();
            best_epoch = epoch as u32;
            bad_streak = 0;
        } else {
            bad_streak += 1;
            if bad_streak > config.patience {
                break;
            }
        }
    }

    let checkpoint = Checkpoint {
        params: best_params,
        vocab: vocab.clone(),
        meta: CheckpointMeta {
            epoch: best_epoch,
            val_loss: best_val,
            seed: config.seed,
            config_json: serde_json::to_string(config).expect("config serializes"),
        },
    };
    Ok(TrainOutcome {
        checkpoint,
        log,
        train_accuracy: accuracy,
        train_pairs: train_idx.len(),
        val_pairs: val_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{canonicalize, train_bpe};

    fn pair(before: &str, after: &str) -> RenamePair {
        RenamePair {
            before: before.to_string(),
            after: after.to_string(),
            source_commit: "t".to_string(),
        }
    }

    fn word_vocab(words: &[&str]) -> BpeVocab {
        let corpus = words
            .iter()
            .flat_map(|w| std::iter::repeat_n(canonicalize(w).unwrap(), 4));
        train_bpe(corpus, 2000, 2).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            max_epochs: 25,
            patience: 25,
            validation_fraction: 0.1,
            embed_dim: 8,
            hidden_dim: 4,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    fn identical_name_pairs() -> (Vec<RenamePair>, BpeVocab) {
        let words = [
            "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india",
            "juliet", "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo",
            "sierra", "tango",
        ];
        let vocab = word_vocab(&words);
        let pairs = words.iter().map(|w| pair(w, w)).collect();
        (pairs, vocab)
    }

    #[test]
    fn identical_pairs_reach_full_discrimination() {
        let (pairs, vocab) = identical_name_pairs();
        let outcome = train(&pairs, &vocab, EncoderKind::Avg, &small_config(), None).unwrap();
        let final_acc = *outcome.train_accuracy.last().unwrap();
        assert!(
            final_acc >= 0.999,
            "each name should be its own nearest key, accuracy {final_acc}"
        );
        // Loss trends down: final epoch loss below the first epoch's.
        let first = outcome.log.first().unwrap().train_loss;
        let last = outcome.log.last().unwrap().train_loss;
        assert!(last < first, "loss should fall: {first} -> {last}");
    }

    #[test]
    fn patience_zero_stops_one_epoch_after_first_non_improvement() {
        let (pairs, vocab) = identical_name_pairs();
        let config = TrainConfig {
            patience: 0,
            max_epochs: 200,
            ..small_config()
        };
        let outcome = train(&pairs, &vocab, EncoderKind::Avg, &config, None).unwrap();
        if outcome.log.len() < config.max_epochs {
            // Replay the stopping rule over the log: the run must end exactly
            // at the first epoch whose validation loss did not improve.
            let mut best = f64::INFINITY;
            let mut stop_at = None;
            for (i, entry) in outcome.log.iter().enumerate() {
                if entry.val_loss < best {
                    best = entry.val_loss;
                } else {
                    stop_at = Some(i + 1);
                    break;
                }
            }
            assert_eq!(Some(outcome.log.len()), stop_at);
        }
    }

    #[test]
    fn same_seed_gives_byte_identical_checkpoints() {
        let (pairs, vocab) = identical_name_pairs();
        let config = TrainConfig {
            max_epochs: 4,
            ..small_config()
        };
        let a = train(&pairs, &vocab, EncoderKind::Lstm, &config, None).unwrap();
        let b = train(&pairs, &vocab, EncoderKind::Lstm, &config, None).unwrap();
        assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
        let c = train(
            &pairs,
            &vocab,
            EncoderKind::Lstm,
            &TrainConfig { seed: 4, ..config },
            None,
        )
        .unwrap();
        assert_ne!(a.checkpoint.to_bytes(), c.checkpoint.to_bytes());
    }

    #[test]
    fn checkpoint_is_the_best_validation_epoch() {
        let (pairs, vocab) = identical_name_pairs();
        let outcome = train(&pairs, &vocab, EncoderKind::Avg, &small_config(), None).unwrap();
        let best = outcome
            .log
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(outcome.checkpoint.meta.val_loss, best);
    }

    #[test]
    fn too_few_pairs_is_an_error() {
        let (_, vocab) = identical_name_pairs();
        let got = train(
            &[pair("a", "b")],
            &vocab,
            EncoderKind::Avg,
            &small_config(),
            None,
        );
        assert!(matches!(got, Err(TrainError::TooFewPairs(1))));
    }

    #[test]
    fn unencodable_name_is_reported() {
        let (mut pairs, vocab) = identical_name_pairs();
        pairs.push(pair("ok", "___"));
        let got = train(&pairs, &vocab, EncoderKind::Avg, &small_config(), None);
        match got {
            Err(TrainError::Tokenize { name, .. }) => assert_eq!(name, "___"),
            other => panic!("expected tokenize error, got {other:?}"),
        }
    }

    #[test]
    fn data_fraction_shrinks_the_training_split_only() {
        let (pairs, vocab) = identical_name_pairs();
        let full = train(&pairs, &vocab, EncoderKind::Avg, &small_config(), None).unwrap();
        let frac = train(
            &pairs,
            &vocab,
            EncoderKind::Avg,
            &TrainConfig {
                data_fraction: 0.25,
                ..small_config()
            },
            None,
        )
        .unwrap();
        assert_eq!(full.val_pairs, frac.val_pairs);
        assert!(frac.train_pairs < full.train_pairs);
        assert!(frac.train_pairs >= 2);
    }
}
