//! Self-contained encoder checkpoints.
//!
//! A checkpoint file carries the vocabulary text, every parameter as raw
//! f64 bits, and training metadata, so loading it is enough to encode any
//! name. Reload reproduces forward outputs bit for bit. Saves are atomic
//! (write to a temp file, then rename).

use std::io::{Read, Write};
use std::path::Path;

use super::lstm::LstmParams;
use super::{EmbeddingTable, EncoderError, EncoderKind, EncoderParams};
use crate::binio::{put_bytes, put_f64, put_f64s, put_u32, put_u64, Reader};
use crate::tokenizer::BpeVocab;
use crate::util::fnv1a64;

const MAGIC: &[u8; 8] = b"VCLRCKPT";
const FORMAT_VERSION: u32 = 1;

fn corrupt(message: String) -> EncoderError {
    EncoderError::Checkpoint(message)
}

/// Provenance recorded alongside the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    /// Epoch whose parameters these are (the best validation epoch).
    pub epoch: u32,
    /// Validation loss at that epoch.
    pub val_loss: f64,
    pub seed: u64,
    /// JSON rendering of the training configuration.
    pub config_json: String,
}

/// A trained encoder bundled with its vocabulary and metadata.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub vocab: BpeVocab,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, FORMAT_VERSION);

        let vocab_text = self.vocab.to_text();
        put_bytes(&mut buf, vocab_text.as_bytes());
        put_u64(&mut buf, fnv1a64(vocab_text.as_bytes()));

        let kind = match self.params.kind() {
            EncoderKind::Avg => 0u8,
            EncoderKind::Lstm => 1u8,
        };
        buf.push(kind);
        put_u64(&mut buf, self.params.table().vocab_size() as u64);
        put_u64(&mut buf, self.params.table().dim() as u64);
        if let Some(lstm) = self.params.lstm() {
            put_u64(&mut buf, lstm.hidden() as u64);
            put_u64(&mut buf, lstm.out_dim() as u64);
        }

        put_u32(&mut buf, self.meta.epoch);
        put_f64(&mut buf, self.meta.val_loss);
        put_u64(&mut buf, self.meta.seed);
        put_bytes(&mut buf, self.meta.config_json.as_bytes());

        for slice in self.params.param_slices() {
            put_f64s(&mut buf, slice);
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncoderError> {
        let mut r = Reader::new(bytes);
        if r.take(8).map_err(corrupt)? != MAGIC {
            return Err(corrupt("not a checkpoint file".to_string()));
        }
        let version = r.u32().map_err(corrupt)?;
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format version {version}")));
        }

        let vocab_bytes = r.bytes_field().map_err(corrupt)?.to_vec();
        let stored_hash = r.u64().map_err(corrupt)?;
        if fnv1a64(&vocab_bytes) != stored_hash {
            return Err(corrupt("vocabulary hash mismatch".to_string()));
        }
        let vocab = BpeVocab::read_from(vocab_bytes.as_slice())
            .map_err(|e| corrupt(format!("embedded vocab: {e}")))?;

        let kind = match r.take(1).map_err(corrupt)?[0] {
            0 => EncoderKind::Avg,
            1 => EncoderKind::Lstm,
            other => return Err(corrupt(format!("unknown encoder kind {other}"))),
        };
        let vocab_size = r.u64().map_err(corrupt)? as usize;
        let embed_dim = r.u64().map_err(corrupt)? as usize;
        if vocab_size != vocab.vocab_size() {
            return Err(corrupt(format!(
                "table rows {vocab_size} do not match vocabulary size {}",
                vocab.vocab_size()
            )));
        }
        let lstm_dims = if kind == EncoderKind::Lstm {
            Some((
                r.u64().map_err(corrupt)? as usize,
                r.u64().map_err(corrupt)? as usize,
            ))
        } else {
            None
        };

        let epoch = r.u32().map_err(corrupt)?;
        let val_loss = r.f64().map_err(corrupt)?;
        let seed = r.u64().map_err(corrupt)?;
        let config_json = String::from_utf8(r.bytes_field().map_err(corrupt)?.to_vec())
            .map_err(|e| corrupt(e.to_string()))?;

        let table_data = r.f64s(vocab_size * embed_dim).map_err(corrupt)?;
        let table = EmbeddingTable::from_rows(embed_dim, table_data)?;
        let lstm = match lstm_dims {
            None => None,
            Some((hidden, out_dim)) => {
                let mut l = LstmParams::zeros(embed_dim, hidden, out_dim);
                l.fwd.w_in = r.f64s(4 * hidden * embed_dim).map_err(corrupt)?;
                l.fwd.w_rec = r.f64s(4 * hidden * hidden).map_err(corrupt)?;
                l.fwd.bias = r.f64s(4 * hidden).map_err(corrupt)?;
                l.bwd.w_in = r.f64s(4 * hidden * embed_dim).map_err(corrupt)?;
                l.bwd.w_rec = r.f64s(4 * hidden * hidden).map_err(corrupt)?;
                l.bwd.bias = r.f64s(4 * hidden).map_err(corrupt)?;
                l.proj = r.f64s(out_dim * 2 * hidden).map_err(corrupt)?;
                Some(l)
            }
        };
        if !r.at_end() {
            return Err(corrupt("trailing bytes after parameters".to_string()));
        }

        Ok(Checkpoint {
            params: EncoderParams::from_parts(kind, table, lstm)?,
            vocab,
            meta: CheckpointMeta {
                epoch,
                val_loss,
                seed,
                config_json,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        let bytes = self.to_bytes();
        let tmp = path.with_extension("tmp-write");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Stable hash of the serialized checkpoint; identifies the encoder in
    /// search indexes and reports.
    pub fn fingerprint(&self) -> u64 {
        fnv1a64(&self.to_bytes())
    }
}
