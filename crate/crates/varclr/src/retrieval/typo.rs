//! Seeded keyboard-typo generation for the spelling-correction benchmark.
//!
//! Each sampled name receives exactly one edit drawn uniformly from
//! {substitute with a QWERTY-adjacent key, insert an adjacent key after a
//! letter, delete a letter, transpose two adjacent letters}, at a uniformly
//! chosen alphabetic position. Results are guaranteed to differ from the
//! original and to remain valid identifiers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RetrievalError;

/// One synthetic misspelling and its correction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypoPair {
    pub misspelled: String,
    pub correct: String,
}

/// Physically adjacent keys on a QWERTY layout, lowercase letters only.
fn adjacent_keys(c: char) -> &'static [char] {
    match c.to_ascii_lowercase() {
        'q' => &['w', 'a', 's'],
        'w' => &['q', 'e', 'a', 's', 'd'],
        'e' => &['w', 'r', 's', 'd', 'f'],
        'r' => &['e', 't', 'd', 'f', 'g'],
        't' => &['r', 'y', 'f', 'g', 'h'],
        'y' => &['t', 'u', 'g', 'h', 'j'],
        'u' => &['y', 'i', 'h', 'j', 'k'],
        'i' => &['u', 'o', 'j', 'k', 'l'],
        'o' => &['i', 'p', 'k', 'l'],
        'p' => &['o', 'l'],
        'a' => &['q', 'w', 's', 'z'],
        's' => &['a', 'd', 'w', 'e', 'z', 'x'],
        'd' => &['s', 'f', 'e', 'r', 'x', 'c'],
        'f' => &['d', 'g', 'r', 't', 'c', 'v'],
        'g' => &['f', 'h', 't', 'y', 'v', 'b'],
        'h' => &['g', 'j', 'y', 'u', 'b', 'n'],
        'j' => &['h', 'k', 'u', 'i', 'n', 'm'],
        'k' => &['j', 'l', 'i', 'o', 'm'],
        'l' => &['k', 'o', 'p', 'm'],
        'z' => &['a', 's', 'x'],
        'x' => &['z', 'c', 's', 'd'],
        'c' => &['x', 'v', 'd', 'f'],
        'v' => &['c', 'b', 'f', 'g'],
        'b' => &['v', 'n', 'g', 'h'],
        'n' => &['b', 'm', 'h', 'j'],
        'm' => &['n', 'j', 'k', 'l'],
        _ => &[],
    }
}

fn is_valid_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && s.chars().any(|c| c.is_ascii_alphanumeric())
}

fn apply_edit<R: Rng>(name: &str, rng: &mut R) -> Option<String> {
    let chars: Vec<char> = name.chars().collect();
    let letter_positions: Vec<usize> = chars
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_ascii_alphabetic())
        .map(|(i, _)| i)
        .collect();
    if letter_positions.is_empty() {
        return None;
    }
    let edit = rng.random_range(0..4u8);
    let pos = letter_positions[rng.random_range(0..letter_positions.len())];
    let mut out = chars.clone();
    match edit {
        0 => {
            let keys = adjacent_keys(chars[pos]);
            out[pos] = keys[rng.random_range(0..keys.len())];
        }
        1 => {
            let keys = adjacent_keys(chars[pos]);
            out.insert(pos + 1, keys[rng.random_range(0..keys.len())]);
        }
        2 => {
            out.remove(pos);
        }
        _ => {
            // Transpose two distinct adjacent letters, if any exist.
            let spots: Vec<usize> = (0..chars.len().saturating_sub(1))
                .filter(|&i| {
                    chars[i].is_ascii_alphabetic()
                        && chars[i + 1].is_ascii_alphabetic()
                        && chars[i] != chars[i + 1]
                })
                .collect();
            if spots.is_empty() {
                return None;
            }
            let i = spots[rng.random_range(0..spots.len())];
            out.swap(i, i + 1);
        }
    }
    let candidate: String = out.into_iter().collect();
    if candidate != name && is_valid_identifier(&candidate) {
        Some(candidate)
    } else {
        None
    }
}

/// Sample `count` names without replacement and misspell each one with a
/// single keyboard edit. Deterministic for a given seed. Errors when the
/// pool is too small or contains a name with no letters.
pub fn make_typos(
    names: &[String],
    count: usize,
    seed: u64,
) -> Result<Vec<TypoPair>, RetrievalError> {
    if count > names.len() {
        return Err(RetrievalError::CountExceedsPool {
            count,
            pool: names.len(),
        });
    }
    for name in names {
        if !name.chars().any(|c| c.is_ascii_alphabetic()) {
            return Err(RetrievalError::NoAlphabetic(name.clone()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.shuffle(&mut rng);

    let mut pairs = Vec::with_capacity(count);
    for &idx in order.iter().take(count) {
        let name = &names[idx];
        let mut misspelled = None;
        for attempt in 0..64 {
            // Substitution always succeeds on a name with a letter, so the
            // last attempts force it.
            let candidate = if attempt < 48 {
                apply_edit(name, &mut rng)
            } else {
                let chars: Vec<char> = name.chars().collect();
                let letters: Vec<usize> = chars
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.is_ascii_alphabetic())
                    .map(|(i, _)| i)
                    .collect();
                let pos = letters[rng.random_range(0..letters.len())];
                let keys = adjacent_keys(chars[pos]);
                let mut out = chars.clone();
                out[pos] = keys[rng.random_range(0..keys.len())];
                let s: String = out.into_iter().collect();
                (s != *name && is_valid_identifier(&s)).then_some(s)
            };
            if let Some(c) = candidate {
                misspelled = Some(c);
                break;
            }
        }
        let misspelled = misspelled.expect("substitution edit always applies");
        pairs.push(TypoPair {
            misspelled,
            correct: name.clone(),
        });
    }
    Ok(pairs)
}
