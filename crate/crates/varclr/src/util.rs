//! Small crate-internal helpers shared across modules.

/// FNV-1a 64-bit hash. Used for vocab/checkpoint fingerprints and manifest
/// input hashes; stability across runs matters, cryptographic strength does
/// not.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Format a number with 6 significant digits, locale-independent.
/// `1.0` renders as `"1.0"`, `0.34567891` as `"0.345679"`.
pub(crate) fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // Round to 6 significant digits via scientific notation, then render
    // the rounded value in shortest-roundtrip form.
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    format!("{rounded:?}")
}
