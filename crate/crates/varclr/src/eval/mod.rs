//! Scoring name pairs against human benchmarks: cosine similarity from a
//! trained encoder, a Levenshtein baseline, and Spearman rank correlation
//! with tie averaging.

mod levenshtein;
mod spearman;

pub use levenshtein::{levenshtein, levenshtein_score};
pub use spearman::spearman;

use thiserror::Error;

use crate::encoders::{Checkpoint, EncoderError};
use crate::tokenizer::{tokenize, TokenizerError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("input lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 values, got {0}")]
    TooShort(usize),
    #[error("rank correlation is undefined for constant input")]
    ConstantInput,
    #[error("benchmark has no scoreable pairs")]
    EmptyBenchmark,
    #[error("benchmark line {line}: {message}")]
    CsvFormat { line: usize, message: String },
    #[error("cannot tokenize `{name}`: {source}")]
    Tokenize {
        name: String,
        source: TokenizerError,
    },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// One benchmark row: two names with human relatedness and/or similarity
/// judgments in [0, 1]. At least one judgment is present.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkPair {
    pub left: String,
    pub right: String,
    pub relatedness: Option<f64>,
    pub similarity: Option<f64>,
}

/// Parse the benchmark CSV format: header `var1,var2,relatedness,similarity`
/// then one pair per line, blank cells allowed.
pub fn parse_benchmark_csv(text: &str) -> Result<Vec<BenchmarkPair>, EvalError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(EvalError::EmptyBenchmark)?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["var1", "var2", "relatedness", "similarity"] {
        return Err(EvalError::CsvFormat {
            line: 1,
            message: format!("expected header `var1,var2,relatedness,similarity`, got `{header}`"),
        });
    }
    let mut pairs = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(EvalError::CsvFormat {
                line: idx + 1,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let parse_cell = |cell: &str| -> Result<Option<f64>, EvalError> {
            if cell.is_empty() {
                return Ok(None);
            }
            cell.parse::<f64>().map(Some).map_err(|e| EvalError::CsvFormat {
                line: idx + 1,
                message: format!("bad score `{cell}`: {e}"),
            })
        };
        let relatedness = parse_cell(fields[2])?;
        let similarity = parse_cell(fields[3])?;
        if relatedness.is_none() && similarity.is_none() {
            return Err(EvalError::CsvFormat {
                line: idx + 1,
                message: "row carries neither a relatedness nor a similarity score".to_string(),
            });
        }
        pairs.push(BenchmarkPair {
            left: fields[0].to_string(),
            right: fields[1].to_string(),
            relatedness,
            similarity,
        });
    }
    if pairs.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }
    Ok(pairs)
}

/// Anything that can score a pair of names. Scores only need to be
/// rank-comparable; Spearman is invariant to monotone transforms.
pub trait PairScorer {
    fn score(&self, left: &str, right: &str) -> Result<f64, EvalError>;
    /// Identifier for reports.
    fn id(&self) -> String;
}

/// Cosine similarity between encoded vectors.
pub struct EncoderScorer<'a> {
    pub checkpoint: &'a Checkpoint,
}

impl PairScorer for EncoderScorer<'_> {
    fn score(&self, left: &str, right: &str) -> Result<f64, EvalError> {
        similarity_score(left, right, self.checkpoint)
    }

    fn id(&self) -> String {
        self.checkpoint.params.describe()
    }
}

/// The syntactic baseline: normalized edit-distance similarity.
pub struct LevenshteinScorer;

impl PairScorer for LevenshteinScorer {
    fn score(&self, left: &str, right: &str) -> Result<f64, EvalError> {
        Ok(levenshtein_score(left, right))
    }

    fn id(&self) -> String {
        "levenshtein".to_string()
    }
}

/// Cosine similarity of the two encoded name vectors, in [-1, 1].
pub fn similarity_score(u: &str, v: &str, ckpt: &Checkpoint) -> Result<f64, EvalError> {
    let encode = |name: &str| -> Result<Vec<f64>, EvalError> {
        let seq = tokenize(name, &ckpt.vocab).map_err(|source| EvalError::Tokenize {
            name: name.to_string(),
            source,
        })?;
        Ok(ckpt.params.encode(&seq)?)
    };
    let hu = encode(u)?;
    let hv = encode(v)?;
    cosine(&hu, &hv)
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(EvalError::Encoder(EncoderError::ZeroVector));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Spearman coefficients of a scorer against the human columns.
#[derive(Debug, Clone)]
pub struct ScoreReport {
    /// Correlation with the human similarity column, when present.
    pub similarity: Option<f64>,
    /// Correlation with the human relatedness column, when present.
    pub relatedness: Option<f64>,
    /// Pairs the scorer handled.
    pub pairs_scored: usize,
    /// Pairs dropped because a name failed tokenization.
    pub pairs_dropped: usize,
    pub scorer: String,
}

/// Score every benchmark pair and correlate against the human judgments.
/// Pairs whose names the scorer cannot handle are dropped and counted, not
/// silently ignored.
pub fn evaluate_benchmark(
    pairs: &[BenchmarkPair],
    scorer: &dyn PairScorer,
) -> Result<ScoreReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }
    let mut scored: Vec<(usize, f64)> = Vec::new();
    let mut dropped = 0usize;
    for (i, pair) in pairs.iter().enumerate() {
        match scorer.score(&pair.left, &pair.right) {
            Ok(s) => scored.push((i, s)),
            Err(EvalError::Tokenize { .. }) => dropped += 1,
            Err(other) => return Err(other),
        }
    }
    if scored.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }

    let correlate = |column: &dyn Fn(&BenchmarkPair) -> Option<f64>| -> Result<Option<f64>, EvalError> {
        let mut model = Vec::new();
        let mut human = Vec::new();
        for (i, s) in &scored {
            if let Some(h) = column(&pairs[*i]) {
                model.push(*s);
                human.push(h);
            }
        }
        if human.is_empty() {
            return Ok(None);
        }
        spearman(&model, &human).map(Some)
    };

    Ok(ScoreReport {
        similarity: correlate(&|p| p.similarity)?,
        relatedness: correlate(&|p| p.relatedness)?,
        pairs_scored: scored.len(),
        pairs_dropped: dropped,
        scorer: scorer.id(),
    })
}
