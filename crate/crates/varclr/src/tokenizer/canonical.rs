//! Canonical word splitting for identifiers.

use super::TokenizerError;

/// An identifier reduced to its lowercase word tokens. Tokens are non-empty
/// and contain only lowercase ASCII letters and digits, so re-joining them
/// in any case style (snake_case, camelCase) canonicalizes back to the same
/// value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CanonicalTokens {
    tokens: Vec<String>,
}

impl CanonicalTokens {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Split an identifier into lowercase word tokens.
///
/// Boundaries: underscores, lowercase→uppercase transitions, letter↔digit
/// transitions, and the end of an uppercase acronym run followed by a
/// lowercase letter (the split lands before the run's final uppercase, so
/// `"HTMLParser2"` → `["html", "parser", "2"]`).
pub fn canonicalize(name: &str) -> Result<CanonicalTokens, TokenizerError> {
    if name.is_empty() {
        return Err(TokenizerError::EmptyName);
    }
    for ch in name.chars() {
        if !(ch.is_ascii_alphanumeric() || ch == '_') {
            return Err(TokenizerError::InvalidCharacter {
                name: name.to_string(),
                ch,
            });
        }
    }

    let chars: Vec<char> = name.chars().collect();
    let mut tokens = Vec::new();
    let mut start = 0;

    let flush = |tokens: &mut Vec<String>, from: usize, to: usize, chars: &[char]| {
        if from < to {
            let token: String = chars[from..to].iter().map(|c| c.to_ascii_lowercase()).collect();
            tokens.push(token);
        }
    };

    for i in 0..chars.len() {
        let c = chars[i];
        if c == '_' {
            flush(&mut tokens, start, i, &chars);
            start = i + 1;
            continue;
        }
        if i == start || i == 0 {
            continue;
        }
        let prev = chars[i - 1];
        if prev == '_' {
            continue;
        }
        let boundary = (prev.is_ascii_lowercase() && c.is_ascii_uppercase())
            || (prev.is_ascii_alphabetic() && c.is_ascii_digit())
            || (prev.is_ascii_digit() && c.is_ascii_alphabetic())
            || (prev.is_ascii_uppercase()
                && c.is_ascii_uppercase()
                && chars.get(i + 1).is_some_and(|n| n.is_ascii_lowercase()));
        if boundary {
            flush(&mut tokens, start, i, &chars);
            start = i;
        }
    }
    flush(&mut tokens, start, chars.len(), &chars);

    if tokens.is_empty() {
        return Err(TokenizerError::NoTokens(name.to_string()));
    }
    Ok(CanonicalTokens { tokens })
}
