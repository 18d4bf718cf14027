//! Small text utilities shared by the ontology, the backends, and the gym.

use std::collections::BTreeSet;

use sha2::{Digest, Sha256};

/// Lowercase, trim, and collapse internal whitespace runs to one space.
pub fn normalize_key(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Collapse whitespace runs without changing case.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercase ASCII slug: alphanumerics kept, everything else folded into `-`.
pub fn slugify(text: &str) -> String {
    let mut slug = String::with_capacity(text.len());
    let mut pending_dash = false;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if pending_dash && !slug.is_empty() {
                slug.push('-');
            }
            pending_dash = false;
            slug.extend(ch.to_lowercase());
        } else {
            pending_dash = true;
        }
    }
    if slug.is_empty() {
        slug.push('x');
    }
    slug
}

/// Hex-encoded SHA-256.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

const STOPWORDS: &[&str] = &[
    "a", "about", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been", "but", "by",
    "can", "could", "do", "does", "for", "from", "has", "have", "i", "if", "in", "into", "is",
    "it", "its", "like", "me", "my", "need", "of", "on", "or", "our", "please", "should", "so",
    "some", "that", "the", "their", "them", "then", "there", "these", "they", "this", "to", "us",
    "want", "was", "we", "what", "when", "where", "which", "while", "who", "will", "with", "would",
    "yes", "you", "your",
];

const SUFFIXES: &[&str] = &[
    "ations", "ation", "ables", "able", "ings", "ing", "ies", "ers", "er", "ed", "es", "ly", "s",
];

/// Crude suffix stripper. Keeps at least three characters of stem so that
/// short words survive untouched.
pub fn stem(word: &str) -> String {
    for suffix in SUFFIXES {
        if let Some(base) = word.strip_suffix(suffix) {
            if base.chars().count() >= 3 {
                return if *suffix == "ies" {
                    format!("{base}y")
                } else {
                    base.to_string()
                };
            }
        }
    }
    word.to_string()
}

/// Lowercased, stopword-free, stemmed content tokens.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .map(|w| stem(&w))
        .collect()
}

/// Fraction of `reference` tokens that also occur in `candidate`.
/// Zero when the reference has no content tokens.
pub fn reference_coverage(candidate: &BTreeSet<String>, reference: &BTreeSet<String>) -> f64 {
    if reference.is_empty() {
        return 0.0;
    }
    let shared = reference.intersection(candidate).count();
    shared as f64 / reference.len() as f64
}
