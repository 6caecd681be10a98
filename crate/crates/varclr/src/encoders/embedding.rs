//! The learnable token-embedding lookup table.

use std::io::{BufRead, Write};

use rand::Rng;

use super::EncoderError;
use crate::tokenizer::BpeVocab;

/// A |vocab| × d table of token embeddings, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    /// Rows drawn uniformly from [-0.5/d, 0.5/d].
    pub fn random<R: Rng>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        let half = 0.5 / dim as f64;
        let data = (0..vocab_size * dim)
            .map(|_| rng.random_range(-half..half))
            .collect();
        EmbeddingTable { dim, data }
    }

    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        EmbeddingTable {
            dim,
            data: vec![0.0; vocab_size * dim],
        }
    }

    pub fn from_rows(dim: usize, data: Vec<f64>) -> Result<Self, EncoderError> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(EncoderError::DimensionMismatch {
                expected: dim,
                got: data.len(),
            });
        }
        Ok(EmbeddingTable { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, id: u32) -> Result<&[f64], EncoderError> {
        let start = id as usize * self.dim;
        if start + self.dim > self.data.len() {
            return Err(EncoderError::IdOutOfRange {
                id,
                vocab: self.vocab_size(),
            });
        }
        Ok(&self.data[start..start + self.dim])
    }

    pub fn row_mut(&mut self, id: u32) -> Result<&mut [f64], EncoderError> {
        let start = id as usize * self.dim;
        if start + self.dim > self.data.len() {
            return Err(EncoderError::IdOutOfRange {
                id,
                vocab: self.vocab_size(),
            });
        }
        Ok(&mut self.data[start..start + self.dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Overlay pre-trained embeddings onto `table` from the text format
/// (`"<count> <dim>"` header, then `"<token> <f1> … <fd>"` rows). Rows for
/// tokens absent from `vocab` are ignored; vocab tokens absent from the
/// file keep their current values. Returns the number of matched tokens.
/// An empty file is a no-op.
pub fn import_embeddings<R: BufRead>(
    table: &mut EmbeddingTable,
    vocab: &BpeVocab,
    reader: R,
) -> Result<usize, EncoderError> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Ok(0),
            Some((_, Ok(line))) if line.trim().is_empty() => continue,
            Some((idx, Ok(line))) => break (idx, line),
            Some((idx, Err(e))) => {
                return Err(EncoderError::EmbeddingFormat {
                    line: idx + 1,
                    message: e.to_string(),
                })
            }
        }
    };
    let (header_idx, header_line) = header;
    let mut parts = header_line.split_whitespace();
    let (count, dim) = match (
        parts.next().and_then(|s| s.parse::<usize>().ok()),
        parts.next().and_then(|s| s.parse::<usize>().ok()),
        parts.next(),
    ) {
        (Some(c), Some(d), None) => (c, d),
        _ => {
            return Err(EncoderError::EmbeddingFormat {
                line: header_idx + 1,
                message: format!("expected `<count> <dim>` header, got `{header_line}`"),
            })
        }
    };
    if dim != table.dim() {
        return Err(EncoderError::DimensionMismatch {
            expected: table.dim(),
            got: dim,
        });
    }

    let mut matched = 0;
    let mut rows_seen = 0;
    for (idx, line) in lines {
        let line = line.map_err(|e| EncoderError::EmbeddingFormat {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        rows_seen += 1;
        let mut fields = line.split_whitespace();
        let token = fields.next().ok_or_else(|| EncoderError::EmbeddingFormat {
            line: idx + 1,
            message: "missing token".to_string(),
        })?;
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| EncoderError::EmbeddingFormat {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if values.len() != dim {
            return Err(EncoderError::EmbeddingFormat {
                line: idx + 1,
                message: format!("expected {dim} values, got {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::EmbeddingFormat {
                line: idx + 1,
                message: "non-finite embedding value".to_string(),
            });
        }
        if let Some(id) = vocab.token_id(token) {
            table.row_mut(id)?.copy_from_slice(&values);
            matched += 1;
        }
    }
    if rows_seen != count {
        return Err(EncoderError::EmbeddingFormat {
            line: header_idx + 1,
            message: format!("header promises {count} rows, found {rows_seen}"),
        });
    }
    Ok(matched)
}

/// Write the full table in the embedding text format, one row per vocab
/// token in id order. Values use shortest-roundtrip formatting, so an
/// export/import cycle reproduces the table exactly.
pub fn export_embeddings<W: Write>(
    table: &EmbeddingTable,
    vocab: &BpeVocab,
    mut writer: W,
) -> Result<(), EncoderError> {
    if vocab.vocab_size() != table.vocab_size() {
        return Err(EncoderError::DimensionMismatch {
            expected: table.vocab_size(),
            got: vocab.vocab_size(),
        });
    }
    writeln!(writer, "{} {}", table.vocab_size(), table.dim())?;
    for id in 0..table.vocab_size() as u32 {
        let token = vocab.token_string(id).expect("dense ids");
        write!(writer, "{token}")?;
        for v in table.row(id)? {
            write!(writer, " {v:?}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{canonicalize, train_bpe};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab() -> BpeVocab {
        let words = std::iter::repeat_n(canonicalize("send").unwrap(), 5);
        train_bpe(words, 200, 2).unwrap()
    }

    #[test]
    fn rows_are_bounds_checked() {
        let table = EmbeddingTable::zeros(4, 3);
        assert!(table.row(3).is_ok());
        assert!(matches!(
            table.row(4),
            Err(EncoderError::IdOutOfRange { id: 4, vocab: 4 })
        ));
    }

    #[test]
    fn import_full_coverage_replaces_every_row() {
        let vocab = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut table = EmbeddingTable::random(vocab.vocab_size(), 2, &mut rng);
        let mut text = format!("{} 2\n", vocab.vocab_size());
        for id in 0..vocab.vocab_size() as u32 {
            text.push_str(&format!("{} 1.5 -2.5\n", vocab.token_string(id).unwrap()));
        }
        let matched = import_embeddings(&mut table, &vocab, text.as_bytes()).unwrap();
        assert_eq!(matched, vocab.vocab_size());
        for id in 0..vocab.vocab_size() as u32 {
            assert_eq!(table.row(id).unwrap(), &[1.5, -2.5]);
        }
    }

    #[test]
    fn import_empty_file_is_a_noop() {
        let vocab = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut table = EmbeddingTable::random(vocab.vocab_size(), 2, &mut rng);
        let before = table.clone();
        let matched = import_embeddings(&mut table, &vocab, "".as_bytes()).unwrap();
        assert_eq!(matched, 0);
        assert_eq!(table, before);
    }

    #[test]
    fn import_single_known_token_replaces_one_row() {
        let vocab = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut table = EmbeddingTable::random(vocab.vocab_size(), 2, &mut rng);
        let before = table.clone();
        let text = "2 2\nsend 9.0 9.0\nnot_in_vocab 1.0 1.0\n";
        let matched = import_embeddings(&mut table, &vocab, text.as_bytes()).unwrap();
        assert_eq!(matched, 1);
        let send = vocab.token_id("send").unwrap();
        assert_eq!(table.row(send).unwrap(), &[9.0, 9.0]);
        for id in 0..vocab.vocab_size() as u32 {
            if id != send {
                assert_eq!(table.row(id).unwrap(), before.row(id).unwrap());
            }
        }
    }

    #[test]
    fn import_rejects_dimension_mismatch() {
        let vocab = vocab();
        let mut table = EmbeddingTable::zeros(vocab.vocab_size(), 2);
        let got = import_embeddings(&mut table, &vocab, "1 3\nsend 1 2 3\n".as_bytes());
        assert!(matches!(got, Err(EncoderError::DimensionMismatch { .. })));
    }

    #[test]
    fn import_rejects_malformed_rows() {
        let vocab = vocab();
        let mut table = EmbeddingTable::zeros(vocab.vocab_size(), 2);
        let got = import_embeddings(&mut table, &vocab, "1 2\nsend 1 oops\n".as_bytes());
        assert!(matches!(got, Err(EncoderError::EmbeddingFormat { line: 2, .. })));
    }

    #[test]
    fn export_import_roundtrip_is_exact() {
        let vocab = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let table = EmbeddingTable::random(vocab.vocab_size(), 4, &mut rng);
        let mut text = Vec::new();
        export_embeddings(&table, &vocab, &mut text).unwrap();
        let mut restored = EmbeddingTable::zeros(vocab.vocab_size(), 4);
        let matched = import_embeddings(&mut restored, &vocab, text.as_slice()).unwrap();
        assert_eq!(matched, vocab.vocab_size());
        assert_eq!(restored, table);
    }
}
