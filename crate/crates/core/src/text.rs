//! Token normalization shared by word alignment and the fallback embedder.

use alloc::string::String;
use alloc::vec::Vec;

/// Lowercases one token and drops ASCII punctuation.
pub fn normalize_token(word: &str) -> String {
    word.chars()
        .filter(|c| !c.is_ascii_punctuation())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Splits on whitespace, lowercases, strips ASCII punctuation and drops
/// tokens that end up empty.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(normalize_token)
        .filter(|t| !t.is_empty())
        .collect()
}
