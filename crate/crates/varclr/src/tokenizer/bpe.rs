//! Trainable byte-pair encoding over canonical word tokens.
//!
//! Merge rules are learned on unmarked symbol strings; the continuation
//! marker is applied when rendering subwords, so every learned symbol
//! contributes two vocabulary entries: one word-initial form and one
//! `"##"`-marked continuation form. The base alphabet is the full lowercase
//! alphanumeric set in both forms, which keeps encoding total and lets a
//! vocab file carry nothing but its merge rules.

use std::collections::{BinaryHeap, HashMap, HashSet};
use std::io::{BufRead, Write};

use super::{CanonicalTokens, TokenizerError};
use crate::util::fnv1a64;

/// Marker prefixed to subwords that continue a previous subword.
pub const CONTINUATION_MARKER: &str = "##";

const BASE_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

/// Number of base vocabulary entries: every lowercase alphanumeric
/// character in initial and continuation form.
pub const BASE_ALPHABET_SIZE: usize = BASE_CHARS.len() * 2;

/// One learned merge: `left` and `right` are unmarked symbol strings and
/// `output` is their concatenation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeRule {
    pub left: String,
    pub right: String,
    pub output: String,
}

/// A trained subword vocabulary: ordered merge rules plus a dense token-id
/// assignment. Immutable once built; encoding is a pure function.
#[derive(Debug, Clone)]
pub struct BpeVocab {
    merges: Vec<MergeRule>,
    tokens: Vec<String>,
    token_to_id: HashMap<String, u32>,
    // left symbol -> right symbol -> merge rank
    pair_rank: HashMap<String, HashMap<String, usize>>,
}

impl BpeVocab {
    /// Build a vocabulary from ordered merge pairs. Every pair must merge
    /// symbols already derivable from the base alphabet and earlier merges.
    pub fn from_merge_pairs(pairs: &[(String, String)]) -> Result<Self, TokenizerError> {
        let mut vocab = Self::base();
        let mut symbols: HashSet<String> =
            BASE_CHARS.iter().map(|&c| (c as char).to_string()).collect();
        for (rank, (left, right)) in pairs.iter().enumerate() {
            if !symbols.contains(left) || !symbols.contains(right) {
                return Err(TokenizerError::VocabFormat {
                    line: rank + 2,
                    message: format!("merge `{left} {right}` references an unknown symbol"),
                });
            }
            let output = format!("{left}{right}");
            symbols.insert(output.clone());
            vocab.push_merge(MergeRule {
                left: left.clone(),
                right: right.clone(),
                output,
            });
        }
        Ok(vocab)
    }

    fn base() -> Self {
        let mut tokens = Vec::with_capacity(BASE_ALPHABET_SIZE);
        for &c in BASE_CHARS {
            tokens.push((c as char).to_string());
        }
        for &c in BASE_CHARS {
            tokens.push(format!("{CONTINUATION_MARKER}{}", c as char));
        }
        let token_to_id = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        BpeVocab {
            merges: Vec::new(),
            tokens,
            token_to_id,
            pair_rank: HashMap::new(),
        }
    }

    fn push_merge(&mut self, rule: MergeRule) {
        self.pair_rank
            .entry(rule.left.clone())
            .or_default()
            .insert(rule.right.clone(), self.merges.len());
        // Distinct merge paths can produce the same output string; the
        // token entries are added only once so ids stay dense.
        if !self.token_to_id.contains_key(&rule.output) {
            for form in [
                rule.output.clone(),
                format!("{CONTINUATION_MARKER}{}", rule.output),
            ] {
                let id = self.tokens.len() as u32;
                self.tokens.push(form.clone());
                self.token_to_id.insert(form, id);
            }
        }
        self.merges.push(rule);
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn merges(&self) -> &[MergeRule] {
        &self.merges
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token_string(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// All token strings in id order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Segment one word into subword strings, `"##"`-marking every
    /// non-initial piece. Merge rules apply in training order; characters
    /// with no applicable rule stay as single-character subwords, so this
    /// never fails.
    pub fn encode_subwords(&self, word: &str) -> Vec<String> {
        let mut syms: Vec<String> = word.chars().map(|c| c.to_string()).collect();
        loop {
            let mut best: Option<(usize, usize)> = None; // (rank, position)
            for i in 0..syms.len().saturating_sub(1) {
                if let Some(&rank) = self
                    .pair_rank
                    .get(&syms[i])
                    .and_then(|m| m.get(&syms[i + 1]))
                {
                    if best.is_none_or(|(r, _)| rank < r) {
                        best = Some((rank, i));
                    }
                }
            }
            let Some((rank, _)) = best else { break };
            let rule = &self.merges[rank];
            let mut merged = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == rule.left && syms[i + 1] == rule.right {
                    merged.push(rule.output.clone());
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut syms[i]));
                    i += 1;
                }
            }
            syms = merged;
        }
        syms.iter()
            .enumerate()
            .map(|(i, s)| {
                if i == 0 {
                    s.clone()
                } else {
                    format!("{CONTINUATION_MARKER}{s}")
                }
            })
            .collect()
    }

    /// Serialize as text: a `"<base_alphabet_size> <merge_count>"` header
    /// followed by one `"left right"` line per merge.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", BASE_ALPHABET_SIZE, self.merges.len())?;
        for rule in &self.merges {
            writeln!(w, "{} {}", rule.left, rule.right)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("vocab text is ASCII")
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, TokenizerError> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(TokenizerError::VocabFormat {
            line: 1,
            message: "missing header".to_string(),
        })?;
        let header = header.map_err(|e| TokenizerError::VocabFormat {
            line: 1,
            message: e.to_string(),
        })?;
        let mut parts = header.split_whitespace();
        let base: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| TokenizerError::VocabFormat {
                line: 1,
                message: format!("expected `<base_size> <merge_count>`, got `{header}`"),
            })?;
        let count: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| TokenizerError::VocabFormat {
                line: 1,
                message: format!("expected `<base_size> <merge_count>`, got `{header}`"),
            })?;
        if base != BASE_ALPHABET_SIZE {
            return Err(TokenizerError::VocabFormat {
                line: 1,
                message: format!("unsupported base alphabet size {base}, expected {BASE_ALPHABET_SIZE}"),
            });
        }
        let mut pairs = Vec::with_capacity(count);
        for (idx, line) in lines {
            let line = line.map_err(|e| TokenizerError::VocabFormat {
                line: idx + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) => pairs.push((l.to_string(), r.to_string())),
                _ => {
                    return Err(TokenizerError::VocabFormat {
                        line: idx + 1,
                        message: format!("expected `left right`, got `{line}`"),
                    })
                }
            }
        }
        if pairs.len() != count {
            return Err(TokenizerError::VocabFormat {
                line: 1,
                message: format!("header promises {count} merges, found {}", pairs.len()),
            });
        }
        Self::from_merge_pairs(&pairs)
    }

    pub fn read_from_path(path: &std::path::Path) -> Result<Self, TokenizerError> {
        let file = std::fs::File::open(path).map_err(|e| TokenizerError::VocabFormat {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::read_from(std::io::BufReader::new(file))
    }

    /// Stable hash of the serialized vocabulary, used to pair checkpoints
    /// with the vocabulary that produced their token ids.
    pub fn fingerprint(&self) -> u64 {
        fnv1a64(self.to_text().as_bytes())
    }
}

#[derive(PartialEq, Eq)]
struct HeapEntry {
    count: u64,
    left: String,
    right: String,
    pair: (u32, u32),
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Highest count first; ties broken toward the lexicographically
        // smallest pair so training is deterministic.
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct TrainerState {
    symbols: Vec<String>,
    symbol_ids: HashMap<String, u32>,
    words: Vec<(Vec<u32>, u64)>,
    pair_counts: HashMap<(u32, u32), u64>,
    pair_words: HashMap<(u32, u32), HashSet<usize>>,
    heap: BinaryHeap<HeapEntry>,
}

impl TrainerState {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.symbol_ids.get(s) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(s.to_string());
        self.symbol_ids.insert(s.to_string(), id);
        id
    }

    fn push_heap(&mut self, pair: (u32, u32), count: u64) {
        self.heap.push(HeapEntry {
            count,
            left: self.symbols[pair.0 as usize].clone(),
            right: self.symbols[pair.1 as usize].clone(),
            pair,
        });
    }

    fn bump(&mut self, pair: (u32, u32), delta: i64, word_idx: usize) {
        let entry = self.pair_counts.entry(pair).or_insert(0);
        let next = (*entry as i64 + delta).max(0) as u64;
        *entry = next;
        if next == 0 {
            self.pair_counts.remove(&pair);
        } else {
            self.push_heap(pair, next);
        }
        if delta > 0 {
            self.pair_words.entry(pair).or_default().insert(word_idx);
        }
    }
}

/// Learn a BPE vocabulary from a corpus of canonical tokens.
///
/// Greedily merges the most frequent adjacent symbol pair (ties go to the
/// lexicographically smallest pair) until the vocabulary reaches
/// `target_vocab_size` or no pair occurs at least `min_pair_frequency`
/// times. Two runs over the same corpus produce identical vocabularies.
pub fn train_bpe<I>(
    corpus: I,
    target_vocab_size: usize,
    min_pair_frequency: u64,
) -> Result<BpeVocab, TokenizerError>
where
    I: IntoIterator<Item = CanonicalTokens>,
{
    if target_vocab_size <= BASE_ALPHABET_SIZE {
        return Err(TokenizerError::VocabTooSmall {
            target: target_vocab_size,
            base: BASE_ALPHABET_SIZE,
        });
    }

    // Deduplicate words, preserving first-seen order for determinism.
    let mut word_index: HashMap<String, usize> = HashMap::new();
    let mut word_list: Vec<(String, u64)> = Vec::new();
    for toks in corpus {
        for word in toks.tokens() {
            match word_index.get(word) {
                Some(&i) => word_list[i].1 += 1,
                None => {
                    word_index.insert(word.clone(), word_list.len());
                    word_list.push((word.clone(), 1));
                }
            }
        }
    }
    if word_list.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }

    let mut state = TrainerState {
        symbols: Vec::new(),
        symbol_ids: HashMap::new(),
        words: Vec::new(),
        pair_counts: HashMap::new(),
        pair_words: HashMap::new(),
        heap: BinaryHeap::new(),
    };

    for (word, count) in &word_list {
        let syms: Vec<u32> = word
            .chars()
            .map(|c| state.intern(&c.to_string()))
            .collect();
        state.words.push((syms, *count));
    }
    for idx in 0..state.words.len() {
        let (syms, count) = (state.words[idx].0.clone(), state.words[idx].1);
        for w in syms.windows(2) {
            state.bump((w[0], w[1]), count as i64, idx);
        }
    }

    let mut vocab = BpeVocab::base();
    loop {
        if vocab.vocab_size() + 2 > target_vocab_size {
            break;
        }
        // Lazy-deletion pop: skip entries whose count is no longer current.
        let best = loop {
            match state.heap.pop() {
                None => break None,
                Some(entry) => {
                    if state.pair_counts.get(&entry.pair) == Some(&entry.count) {
                        break Some(entry);
                    }
                }
            }
        };
        let Some(best) = best else { break };
        if best.count < min_pair_frequency {
            break;
        }

        let new_sym = format!("{}{}", best.left, best.right);
        let new_id = state.intern(&new_sym);
        let affected: Vec<usize> = state
            .pair_words
            .remove(&best.pair)
            .map(|s| {
                let mut v: Vec<usize> = s.into_iter().collect();
                v.sort_unstable();
                v
            })
            .unwrap_or_default();

        for idx in affected {
            let (old_syms, count) = (state.words[idx].0.clone(), state.words[idx].1);
            let mut new_syms = Vec::with_capacity(old_syms.len());
            let mut i = 0;
            let mut changed = false;
            while i < old_syms.len() {
                if i + 1 < old_syms.len()
                    && old_syms[i] == best.pair.0
                    && old_syms[i + 1] == best.pair.1
                {
                    new_syms.push(new_id);
                    i += 2;
                    changed = true;
                } else {
                    new_syms.push(old_syms[i]);
                    i += 1;
                }
            }
            if !changed {
                continue; // stale occurrence entry
            }
            for w in old_syms.windows(2) {
                state.bump((w[0], w[1]), -(count as i64), idx);
            }
            for w in new_syms.windows(2) {
                state.bump((w[0], w[1]), count as i64, idx);
            }
            state.words[idx].0 = new_syms;
        }
        state.pair_counts.remove(&best.pair);

        vocab.push_merge(MergeRule {
            left: best.left,
            right: best.right,
            output: new_sym,
        });
    }

    Ok(vocab)
}
