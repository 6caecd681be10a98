//! Dense top-k cosine search over a name pool, Hit@K evaluation, the
//! similar-pair filter for building search benchmarks, and keyboard-typo
//! generation for the spelling-correction task.
//!
//! Retrieval is brute-force dense scoring: one matrix-vector product per
//! query over unit-norm pool vectors. Index files embed the checkpoint
//! that produced them, so queries can be encoded from the index alone.

mod typo;

pub use typo::{make_typos, TypoPair};

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::binio::{put_bytes, put_f64s, put_u32, put_u64, Reader};
use crate::encoders::{Checkpoint, EncoderError};
use crate::eval::BenchmarkPair;
use crate::tokenizer::{tokenize, TokenizerError};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("k = {k} is out of range for a pool of {pool}")]
    KOutOfRange { k: usize, pool: usize },
    #[error("target `{0}` is not in the index")]
    MissingTarget(String),
    #[error("`{0}` has no alphabetic characters to misspell")]
    NoAlphabetic(String),
    #[error("cannot sample {count} names from a pool of {pool}")]
    CountExceedsPool { count: usize, pool: usize },
    #[error("cannot tokenize `{name}`: {source}")]
    Tokenize {
        name: String,
        source: TokenizerError,
    },
    #[error("index file: {0}")]
    IndexFormat(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const INDEX_MAGIC: &[u8; 8] = b"VCLRVIDX";
const INDEX_VERSION: u32 = 1;

/// A deduplicated name pool with precomputed unit-norm vectors, tagged
/// with the fingerprint of the encoder that produced them.
#[derive(Debug, Clone)]
pub struct SearchIndex {
    names: Vec<String>,
    dim: usize,
    vectors: Vec<f64>, // |names| × dim, unit-norm rows
    fingerprint: u64,
}

/// One ranked search result.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub name: String,
    pub score: f64,
}

/// Hit@K fractions over a query set, one per cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct HitCurve {
    pub ks: Vec<usize>,
    pub hits: Vec<f64>,
    pub queries: usize,
}

/// Index construction outcome: names that failed tokenization are dropped
/// and reported, not silently ignored.
#[derive(Debug)]
pub struct BuildReport {
    pub index: SearchIndex,
    pub dropped: Vec<String>,
}

/// Encode and normalize `names` (first occurrence wins on duplicates).
pub fn build_index(names: &[String], ckpt: &Checkpoint) -> Result<BuildReport, RetrievalError> {
    build_index_parallel(names, ckpt, 1)
}

/// [`build_index`] with encoding fanned out over `workers` threads. Each
/// name writes its own result slot and assembly is sequential, so the
/// output is identical for any worker count.
pub fn build_index_parallel(
    names: &[String],
    ckpt: &Checkpoint,
    workers: usize,
) -> Result<BuildReport, RetrievalError> {
    if names.is_empty() {
        return Err(RetrievalError::EmptyPool);
    }
    let mut unique: Vec<&String> = Vec::new();
    let mut seen: HashMap<&str, ()> = HashMap::new();
    for name in names {
        if seen.insert(name.as_str(), ()).is_none() {
            unique.push(name);
        }
    }

    let encoded: Vec<Result<Vec<f64>, RetrievalError>> = if workers <= 1 || unique.len() < 2 {
        unique.iter().map(|n| encode_query(ckpt, n)).collect()
    } else {
        let mut slots: Vec<Option<Result<Vec<f64>, RetrievalError>>> = Vec::new();
        slots.resize_with(unique.len(), || None);
        let chunk = unique.len().div_ceil(workers.min(unique.len()));
        std::thread::scope(|scope| {
            for (slot_chunk, name_chunk) in slots.chunks_mut(chunk).zip(unique.chunks(chunk)) {
                scope.spawn(move || {
                    for (slot, name) in slot_chunk.iter_mut().zip(name_chunk) {
                        *slot = Some(encode_query(ckpt, name));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.expect("slot filled")).collect()
    };

    let dim = ckpt.params.out_dim();
    let mut kept: Vec<String> = Vec::new();
    let mut vectors: Vec<f64> = Vec::new();
    let mut dropped = Vec::new();
    for (name, result) in unique.iter().zip(encoded) {
        match result {
            Ok(v) => {
                kept.push((*name).clone());
                vectors.extend_from_slice(&v);
            }
            Err(RetrievalError::Tokenize { .. }) | Err(RetrievalError::Encoder(_)) => {
                dropped.push((*name).clone());
            }
            Err(other) => return Err(other),
        }
    }
    if kept.is_empty() {
        return Err(RetrievalError::EmptyPool);
    }
    Ok(BuildReport {
        index: SearchIndex {
            names: kept,
            dim,
            vectors,
            fingerprint: ckpt.fingerprint(),
        },
        dropped,
    })
}

/// Tokenize, encode, and unit-normalize one name with the checkpoint's
/// encoder.
pub fn encode_query(ckpt: &Checkpoint, name: &str) -> Result<Vec<f64>, RetrievalError> {
    let seq = tokenize(name, &ckpt.vocab).map_err(|source| RetrievalError::Tokenize {
        name: name.to_string(),
        source,
    })?;
    let raw = ckpt.params.encode(&seq)?;
    Ok(crate::encoders::l2_normalize(&raw)?)
}

impl SearchIndex {
    /// Build directly from vectors (normalized here), bypassing any
    /// encoder. Names must be distinct.
    pub fn from_vectors(
        names: Vec<String>,
        dim: usize,
        vectors: Vec<f64>,
        fingerprint: u64,
    ) -> Result<Self, RetrievalError> {
        if names.is_empty() {
            return Err(RetrievalError::EmptyPool);
        }
        let distinct: std::collections::HashSet<&str> =
            names.iter().map(String::as_str).collect();
        if distinct.len() != names.len() {
            return Err(RetrievalError::IndexFormat(
                "pool names must be distinct".to_string(),
            ));
        }
        if dim == 0 || vectors.len() != names.len() * dim {
            return Err(RetrievalError::IndexFormat(format!(
                "{} names with dim {dim} need {} values, got {}",
                names.len(),
                names.len() * dim,
                vectors.len()
            )));
        }
        let mut vectors = vectors;
        for row in vectors.chunks_mut(dim) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(RetrievalError::Encoder(EncoderError::ZeroVector));
            }
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        Ok(SearchIndex {
            names,
            dim,
            vectors,
            fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The unit-norm vector stored for pool entry `i`.
    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn scores(&self, query: &[f64]) -> Vec<f64> {
        self.vectors
            .chunks(self.dim)
            .map(|row| row.iter().zip(query).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// The `k` pool entries with the largest dot product against the
    /// (unit-norm) query vector, descending, ties broken by pool order.
    /// `exclude` drops the pool entry with that exact name, used when the
    /// query itself lives in the pool.
    pub fn search_vec(
        &self,
        query: &[f64],
        k: usize,
        exclude: Option<&str>,
    ) -> Result<Vec<SearchHit>, RetrievalError> {
        if k == 0 || k > self.len() {
            return Err(RetrievalError::KOutOfRange { k, pool: self.len() });
        }
        let scores = self.scores(query);
        let mut ranked: Vec<usize> = (0..self.len())
            .filter(|&i| exclude != Some(self.names[i].as_str()))
            .collect();
        ranked.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.cmp(&b))
        });
        Ok(ranked
            .into_iter()
            .take(k)
            .map(|i| SearchHit {
                name: self.names[i].clone(),
                score: scores[i],
            })
            .collect())
    }

    /// Rank of the named target (0-based) for a query vector, under the
    /// same ordering as [`SearchIndex::search_vec`].
    pub fn rank_of(
        &self,
        query: &[f64],
        target: &str,
        exclude: Option<&str>,
    ) -> Result<usize, RetrievalError> {
        let pos = self
            .names
            .iter()
            .position(|n| n == target)
            .ok_or_else(|| RetrievalError::MissingTarget(target.to_string()))?;
        Ok(self.target_rank(query, pos, exclude))
    }

    /// Rank of `target` (0-based) for the given query vector under the
    /// same ordering as [`SearchIndex::search_vec`].
    fn target_rank(&self, query: &[f64], target_pos: usize, exclude: Option<&str>) -> usize {
        let scores = self.scores(query);
        let ts = scores[target_pos];
        let mut rank = 0;
        for (i, &score) in scores.iter().enumerate() {
            if i == target_pos || exclude == Some(self.names[i].as_str()) {
                continue;
            }
            if score > ts || (score == ts && i < target_pos) {
                rank += 1;
            }
        }
        rank
    }
}

/// Top-k pool names most similar to `query` under the checkpoint encoder.
pub fn search(
    index: &SearchIndex,
    ckpt: &Checkpoint,
    query: &str,
    k: usize,
    exclude_query: bool,
) -> Result<Vec<SearchHit>, RetrievalError> {
    let qvec = encode_query(ckpt, query)?;
    index.search_vec(&qvec, k, exclude_query.then_some(query))
}

/// Fraction of `(query, target)` pairs whose target lands in the query's
/// top-k list, for each cutoff in `ks`. Every target must be in the index;
/// cutoffs beyond the pool size saturate at hit rate 1.
pub fn hit_at_k(
    index: &SearchIndex,
    ckpt: &Checkpoint,
    queries: &[(String, String)],
    ks: &[usize],
    exclude_query: bool,
) -> Result<HitCurve, RetrievalError> {
    let positions: HashMap<&str, usize> = index
        .names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut ranks = Vec::with_capacity(queries.len());
    for (query, target) in queries {
        let &target_pos = positions
            .get(target.as_str())
            .ok_or_else(|| RetrievalError::MissingTarget(target.clone()))?;
        let qvec = encode_query(ckpt, query)?;
        ranks.push(index.target_rank(&qvec, target_pos, exclude_query.then_some(query.as_str())));
    }
    let hits = ks
        .iter()
        .map(|&k| ranks.iter().filter(|&&r| r < k).count() as f64 / ranks.len().max(1) as f64)
        .collect();
    Ok(HitCurve {
        ks: ks.to_vec(),
        hits,
        queries: queries.len(),
    })
}

/// Benchmark pairs whose human similarity exceeds `threshold` (strictly),
/// as `(query, target)` tuples. By default only the left→right direction
/// is emitted, one query per pair; `both_directions` adds the reverse.
pub fn filter_similar_pairs(
    pairs: &[BenchmarkPair],
    threshold: f64,
    both_directions: bool,
) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for p in pairs {
        if let Some(sim) = p.similarity {
            if sim > threshold {
                out.push((p.left.clone(), p.right.clone()));
                if both_directions {
                    out.push((p.right.clone(), p.left.clone()));
                }
            }
        }
    }
    out
}

/// Write an index file: the embedded checkpoint plus names and vectors.
pub fn write_index_file(
    index: &SearchIndex,
    ckpt: &Checkpoint,
    path: &Path,
) -> Result<(), RetrievalError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(INDEX_MAGIC);
    put_u32(&mut buf, INDEX_VERSION);
    put_bytes(&mut buf, &ckpt.to_bytes());
    put_u64(&mut buf, index.fingerprint);
    put_u64(&mut buf, index.names.len() as u64);
    for name in &index.names {
        put_bytes(&mut buf, name.as_bytes());
    }
    put_u64(&mut buf, index.dim as u64);
    put_f64s(&mut buf, &index.vectors);

    let tmp = path.with_extension("tmp-write");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Read an index file back, returning the index and its embedded
/// checkpoint.
pub fn read_index_file(path: &Path) -> Result<(SearchIndex, Checkpoint), RetrievalError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader::new(&bytes);
    let fail = RetrievalError::IndexFormat;
    if r.take(8).map_err(fail)? != INDEX_MAGIC {
        return Err(RetrievalError::IndexFormat("not an index file".to_string()));
    }
    let version = r.u32().map_err(fail)?;
    if version != INDEX_VERSION {
        return Err(RetrievalError::IndexFormat(format!(
            "unsupported format version {version}"
        )));
    }
    let ckpt_bytes = r.bytes_field().map_err(fail)?.to_vec();
    let ckpt = Checkpoint::from_bytes(&ckpt_bytes)?;
    let fingerprint = r.u64().map_err(fail)?;
    let name_count = r.u64().map_err(fail)? as usize;
    let mut names = Vec::with_capacity(name_count);
    for _ in 0..name_count {
        let raw = r.bytes_field().map_err(fail)?;
        names.push(
            String::from_utf8(raw.to_vec())
                .map_err(|e| RetrievalError::IndexFormat(e.to_string()))?,
        );
    }
    let dim = r.u64().map_err(fail)? as usize;
    let vectors = r.f64s(name_count * dim).map_err(fail)?;
    if !r.at_end() {
        return Err(RetrievalError::IndexFormat("trailing bytes".to_string()));
    }
    Ok((
        SearchIndex {
            names,
            dim,
            vectors,
            fingerprint,
        },
        ckpt,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stub_index(vectors: &[Vec<f64>]) -> SearchIndex {
        let dim = vectors[0].len();
        let names = (0..vectors.len()).map(|i| format!("name{i}")).collect();
        let flat: Vec<f64> = vectors.iter().flatten().copied().collect();
        SearchIndex::from_vectors(names, dim, flat, 0).unwrap()
    }

    #[test]
    fn from_vectors_normalizes_rows() {
        let index = stub_index(&[vec![3.0, 4.0], vec![0.0, 2.0]]);
        assert_eq!(index.len(), 2);
        let row0: Vec<f64> = index.vectors[..2].to_vec();
        assert!((row0[0] - 0.6).abs() < 1e-15);
        assert!((row0[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn search_ranks_by_dot_product_with_pool_order_ties() {
        let index = stub_index(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0], // same direction as row 0: tie broken by order
            vec![-1.0, 0.0],
        ]);
        let hits = index.search_vec(&[1.0, 0.0], 4, None).unwrap();
        let names: Vec<&str> = hits.iter().map(|h| h.name.as_str()).collect();
        assert_eq!(names, vec!["name0", "name2", "name1", "name3"]);
        assert!((hits[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn k_bounds_are_enforced() {
        let index = stub_index(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(
            index.search_vec(&[1.0, 0.0], 0, None),
            Err(RetrievalError::KOutOfRange { k: 0, pool: 2 })
        ));
        assert!(matches!(
            index.search_vec(&[1.0, 0.0], 3, None),
            Err(RetrievalError::KOutOfRange { k: 3, pool: 2 })
        ));
    }

    #[test]
    fn exclude_query_drops_the_exact_name() {
        let index = stub_index(&[vec![1.0, 0.0], vec![0.9, 0.1], vec![0.0, 1.0]]);
        let hits = index.search_vec(&[1.0, 0.0], 2, Some("name0")).unwrap();
        assert_eq!(hits[0].name, "name1");
    }

    /// Full-sort oracle over random pools: search must return exactly the
    /// k best under (score desc, pool order asc).
    #[test]
    fn search_matches_full_sort_oracle_on_random_pools() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..100 {
            let pool = rng.random_range(1..60);
            let dim = rng.random_range(1..6);
            let vectors: Vec<Vec<f64>> = (0..pool)
                .map(|_| {
                    (0..dim)
                        .map(|_| f64::from(rng.random_range(-3..4)) + 0.1)
                        .collect()
                })
                .collect();
            let index = stub_index(&vectors);
            let query: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let k = rng.random_range(1..=pool);

            let got = index.search_vec(&query, k, None).unwrap();

            let scores = index.scores(&query);
            let mut order: Vec<usize> = (0..pool).collect();
            order.sort_by(|&a, &b| {
                scores[b]
                    .partial_cmp(&scores[a])
                    .unwrap()
                    .then_with(|| a.cmp(&b))
            });
            let expected: Vec<String> = order[..k].iter().map(|&i| format!("name{i}")).collect();
            let got_names: Vec<String> = got.into_iter().map(|h| h.name).collect();
            assert_eq!(got_names, expected);
        }
    }

    #[test]
    fn filter_similar_pairs_thresholds_strictly() {
        let pairs = vec![
            BenchmarkPair {
                left: "a".into(),
                right: "b".into(),
                relatedness: None,
                similarity: Some(0.4),
            },
            BenchmarkPair {
                left: "c".into(),
                right: "d".into(),
                relatedness: Some(0.9),
                similarity: Some(0.41),
            },
            BenchmarkPair {
                left: "e".into(),
                right: "f".into(),
                relatedness: Some(0.2),
                similarity: None,
            },
        ];
        // Strictly greater: the pair at exactly 0.4 is excluded.
        let kept = filter_similar_pairs(&pairs, 0.4, false);
        assert_eq!(kept, vec![("c".to_string(), "d".to_string())]);
        let both = filter_similar_pairs(&pairs, 0.4, true);
        assert_eq!(both.len(), 2);
        assert!(filter_similar_pairs(&pairs, 1.0, false).is_empty());
        assert_eq!(filter_similar_pairs(&pairs, -1.0, false).len(), 2);
    }
}
