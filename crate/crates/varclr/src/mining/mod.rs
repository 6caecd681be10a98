//! Mining weakly-supervised rename pairs from commit diffs.
//!
//! A commit qualifies as a rename when it touches fewer than a configured
//! number of changed lines and exactly one identifier substitution replays
//! the removed lines into the added lines byte-exactly. The before/after
//! names of that substitution form one training pair.

mod diff;

pub use diff::{parse_commit_stream, parse_unified_diff, CommitDiff, DiffError, Hunk};

use std::collections::HashSet;

/// One weakly-supervised positive pair: a variable name before and after a
/// renaming commit. `before != after` always holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenamePair {
    pub before: String,
    pub after: String,
    pub source_commit: String,
}

/// Outcome of mining a stream of commits: deduplicated pairs in first-seen
/// order plus per-input parse failures that were skipped.
#[derive(Debug, Default)]
pub struct MiningReport {
    pub pairs: Vec<RenamePair>,
    pub commits_seen: usize,
    pub parse_failures: Vec<DiffError>,
}

/// Maximal `[A-Za-z0-9_]` runs that start with a letter or underscore.
fn identifier_tokens(line: &str) -> Vec<&str> {
    let bytes = line.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if is_word_byte(bytes[i]) {
            let start = i;
            while i < bytes.len() && is_word_byte(bytes[i]) {
                i += 1;
            }
            if bytes[start].is_ascii_alphabetic() || bytes[start] == b'_' {
                tokens.push(&line[start..i]);
            }
        } else {
            i += 1;
        }
    }
    tokens
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Replace every occurrence of the identifier `from` (as a whole token)
/// with `to`. Non-identifier text and word runs starting with a digit pass
/// through untouched.
fn replace_identifier(line: &str, from: &str, to: &str) -> String {
    let bytes = line.as_bytes();
    let mut out = String::with_capacity(line.len());
    let mut i = 0;
    while i < bytes.len() {
        if is_word_byte(bytes[i]) {
            let start = i;
            while i < bytes.len() && is_word_byte(bytes[i]) {
                i += 1;
            }
            let run = &line[start..i];
            let is_ident = bytes[start].is_ascii_alphabetic() || bytes[start] == b'_';
            if is_ident && run == from {
                out.push_str(to);
            } else {
                out.push_str(run);
            }
        } else {
            // Word bytes are ASCII, so both ends of this span sit on char
            // boundaries even when it contains multi-byte text.
            let start = i;
            while i < bytes.len() && !is_word_byte(bytes[i]) {
                i += 1;
            }
            out.push_str(&line[start..i]);
        }
    }
    out
}

/// Extract the rename pair a commit encodes, if any.
///
/// Returns a pair only when the commit changes fewer than
/// `max_changed_lines` lines in total (removed plus added) and exactly one
/// identifier substitution maps every removed line onto its added
/// counterpart exactly. Multi-rename or structurally changed commits yield
/// `None`.
pub fn extract_rename(diff: &CommitDiff, max_changed_lines: usize) -> Option<RenamePair> {
    let removed: usize = diff.hunks.iter().map(|h| h.removed.len()).sum();
    let added: usize = diff.hunks.iter().map(|h| h.added.len()).sum();
    if removed + added == 0 || removed + added >= max_changed_lines {
        return None;
    }
    // A token substitution maps lines one-to-one within each hunk.
    if diff.hunks.iter().any(|h| h.removed.len() != h.added.len()) {
        return None;
    }

    let line_pairs: Vec<(&str, &str)> = diff
        .hunks
        .iter()
        .flat_map(|h| h.removed.iter().zip(h.added.iter()))
        .map(|(r, a)| (r.as_str(), a.as_str()))
        .collect();
    let (first_removed, first_added) = line_pairs.iter().find(|(r, a)| r != a)?;

    // Candidate substitutions come from the first differing line pair: the
    // true rename must transform it, so its names appear on both sides.
    let mut passing: Vec<(String, String)> = Vec::new();
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    for old in identifier_tokens(first_removed) {
        for new in identifier_tokens(first_added) {
            if old == new || !seen.insert((old, new)) {
                continue;
            }
            let replays = line_pairs
                .iter()
                .all(|(r, a)| replace_identifier(r, old, new) == *a);
            if replays {
                passing.push((old.to_string(), new.to_string()));
            }
        }
    }

    match passing.as_slice() {
        [(before, after)] => Some(RenamePair {
            before: before.clone(),
            after: after.clone(),
            source_commit: diff.commit_id.clone(),
        }),
        _ => None,
    }
}

/// Run [`extract_rename`] over a stream of parse results, skipping and
/// recording inputs that failed to parse, deduplicating exact
/// `(before, after)` pairs, and preserving first-seen order.
pub fn mine_corpus<I>(diffs: I, max_changed_lines: usize) -> MiningReport
where
    I: IntoIterator<Item = Result<CommitDiff, DiffError>>,
{
    let mut report = MiningReport::default();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for item in diffs {
        let diff = match item {
            Ok(d) => d,
            Err(e) => {
                report.parse_failures.push(e);
                continue;
            }
        };
        report.commits_seen += 1;
        if let Some(pair) = extract_rename(&diff, max_changed_lines) {
            debug_assert_ne!(pair.before, pair.after);
            if seen.insert((pair.before.clone(), pair.after.clone())) {
                report.pairs.push(pair);
            }
        }
    }
    report
}
