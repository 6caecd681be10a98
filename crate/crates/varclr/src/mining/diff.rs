//! Prefix-based unified diff parsing, tolerant of `git log -p` streams.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiffError {
    #[error("line {line}: malformed hunk header `{text}`")]
    MalformedHunkHeader { line: usize, text: String },
    #[error("line {line}: change line `{text}` appears before any @@ hunk header")]
    MissingHunkHeader { line: usize, text: String },
    #[error("line {line}: hunk ends before its header's line counts are satisfied")]
    TruncatedHunk { line: usize },
}

/// One hunk: the removed and added line blocks for a file, without their
/// `-`/`+` prefixes and without trailing newlines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    pub file: String,
    pub removed: Vec<String>,
    pub added: Vec<String>,
}

/// All hunks of a single commit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitDiff {
    pub commit_id: String,
    pub hunks: Vec<Hunk>,
}

/// `@@ -start[,len] +start[,len] @@` with omitted lengths defaulting to 1.
fn parse_hunk_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix("@@ ")?;
    let end = rest.find(" @@")?;
    let ranges = &rest[..end];
    let mut parts = ranges.split(' ');
    let src = parts.next()?.strip_prefix('-')?;
    let tgt = parts.next()?.strip_prefix('+')?;
    if parts.next().is_some() {
        return None;
    }
    let len_of = |range: &str| -> Option<usize> {
        match range.split_once(',') {
            Some((start, len)) => {
                start.parse::<usize>().ok()?;
                len.parse::<usize>().ok()
            }
            None => {
                range.parse::<usize>().ok()?;
                Some(1)
            }
        }
    };
    Some((len_of(src)?, len_of(tgt)?))
}

fn strip_file_prefix(path: &str) -> String {
    let path = path.split('\t').next().unwrap_or(path);
    path.strip_prefix("a/")
        .or_else(|| path.strip_prefix("b/"))
        .unwrap_or(path)
        .to_string()
}

/// Parse a stream of commits delimited by `commit <id>` lines. Text with no
/// such delimiters is treated as a single commit named `default_id`.
/// Narrative lines (authors, commit messages) outside hunks are ignored;
/// change lines outside a hunk and malformed `@@` headers are errors.
pub fn parse_commit_stream(text: &str, default_id: &str) -> Result<Vec<CommitDiff>, DiffError> {
    let mut commits: Vec<CommitDiff> = Vec::new();
    let mut current = CommitDiff {
        commit_id: default_id.to_string(),
        hunks: Vec::new(),
    };
    let mut saw_delimiter = false;

    let mut file = String::new();
    let mut in_file = false;
    // Remaining (source, target) line counts of the open hunk, if any.
    let mut open: Option<(usize, usize)> = None;

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;

        if let Some((src_left, tgt_left)) = open.as_mut() {
            let consumed = match line.as_bytes().first() {
                Some(b'-') => {
                    current
                        .hunks
                        .last_mut()
                        .expect("open hunk")
                        .removed
                        .push(line[1..].to_string());
                    *src_left = src_left.checked_sub(1).ok_or(DiffError::TruncatedHunk { line: lineno })?;
                    true
                }
                Some(b'+') => {
                    current
                        .hunks
                        .last_mut()
                        .expect("open hunk")
                        .added
                        .push(line[1..].to_string());
                    *tgt_left = tgt_left.checked_sub(1).ok_or(DiffError::TruncatedHunk { line: lineno })?;
                    true
                }
                Some(b' ') | None => {
                    // Context line; some tools emit fully empty context lines.
                    *src_left = src_left.checked_sub(1).ok_or(DiffError::TruncatedHunk { line: lineno })?;
                    *tgt_left = tgt_left.checked_sub(1).ok_or(DiffError::TruncatedHunk { line: lineno })?;
                    true
                }
                Some(b'\\') => true, // "\ No newline at end of file"
                _ => return Err(DiffError::TruncatedHunk { line: lineno }),
            };
            if consumed {
                if let Some((0, 0)) = open {
                    open = None;
                }
                continue;
            }
        }

        if let Some(id) = line.strip_prefix("commit ") {
            let id = id.trim();
            if !id.is_empty() && !id.contains(' ') {
                if saw_delimiter || !current.hunks.is_empty() {
                    commits.push(std::mem::replace(
                        &mut current,
                        CommitDiff {
                            commit_id: String::new(),
                            hunks: Vec::new(),
                        },
                    ));
                }
                current.commit_id = id.to_string();
                saw_delimiter = true;
                in_file = false;
                continue;
            }
        }
        if line.starts_with("diff --git") {
            in_file = false;
            continue;
        }
        if let Some(path) = line.strip_prefix("--- ") {
            file = strip_file_prefix(path.trim());
            in_file = false;
            continue;
        }
        if let Some(path) = line.strip_prefix("+++ ") {
            let target = strip_file_prefix(path.trim());
            if target != "/dev/null" {
                file = target;
            }
            in_file = true;
            continue;
        }
        if line.starts_with("@@") {
            let (src_len, tgt_len) = parse_hunk_header(line).ok_or_else(|| {
                DiffError::MalformedHunkHeader {
                    line: lineno,
                    text: line.to_string(),
                }
            })?;
            current.hunks.push(Hunk {
                file: file.clone(),
                removed: Vec::new(),
                added: Vec::new(),
            });
            if src_len + tgt_len > 0 {
                open = Some((src_len, tgt_len));
            }
            continue;
        }
        if in_file && (line.starts_with('+') || line.starts_with('-')) {
            return Err(DiffError::MissingHunkHeader {
                line: lineno,
                text: line.to_string(),
            });
        }
        // Anything else (commit messages, index lines, mode lines) is noise.
    }

    if open.is_some() {
        return Err(DiffError::TruncatedHunk {
            line: text.lines().count(),
        });
    }
    if saw_delimiter || !current.hunks.is_empty() {
        commits.push(current);
    }
    Ok(commits)
}

/// Parse a single-commit unified diff into its hunks.
pub fn parse_unified_diff(text: &str) -> Result<Vec<Hunk>, DiffError> {
    let commits = parse_commit_stream(text, "unknown")?;
    Ok(commits.into_iter().flat_map(|c| c.hunks).collect())
}
