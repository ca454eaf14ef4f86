use super::StoreError;

/// Lowercase with one-to-one case mapping, trim, and join whitespace-separated
/// words with a single `-`.
pub fn normalize(raw: &str) -> Result<String, StoreError> {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push('-');
        }
        out.extend(word.chars().map(fold_char));
    }
    if out.is_empty() {
        Err(StoreError::EmptyAfterNormalization)
    } else {
        Ok(out)
    }
}

/// Simple (single code point) case folding. Characters whose lowercase form
/// expands to several code points are left alone.
fn fold_char(c: char) -> char {
    if c == 'ς' {
        return 'σ';
    }
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}
