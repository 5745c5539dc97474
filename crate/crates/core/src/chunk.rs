//! Recursive character chunking with bounded overlap.
//!
//! Text is segmented by descending an ordered separator list (separators stay
//! attached to the segment they terminate), then segments are greedily packed
//! into chunks of at most `max_size` characters. Each chunk after the first
//! is prefixed with a suffix of its predecessor of at most `max_overlap`
//! characters; the overlap counts against the chunk's own size budget.
//!
//! All sizes are in Unicode scalar values (Rust `char`s), not bytes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Chunker settings. Defaults: 1024-char chunks, 48-char overlap,
/// paragraph → line → sentence → word → character separator descent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    pub max_size: usize,
    pub max_overlap: usize,
    pub separators: Vec<String>,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            max_size: 1024,
            max_overlap: 48,
            separators: ["\n\n", "\n", ". ", " ", ""]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChunkingConfigError {
    #[error("max_size must be positive")]
    ZeroMaxSize,
    #[error("max_overlap ({overlap}) must be smaller than max_size ({size})")]
    OverlapTooLarge { overlap: usize, size: usize },
    #[error("separator list must end with the empty string")]
    MissingCharFallback,
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), ChunkingConfigError> {
        if self.max_size == 0 {
            return Err(ChunkingConfigError::ZeroMaxSize);
        }
        if self.max_overlap >= self.max_size {
            return Err(ChunkingConfigError::OverlapTooLarge {
                overlap: self.max_overlap,
                size: self.max_size,
            });
        }
        if self.separators.last().map(String::as_str) != Some("") {
            return Err(ChunkingConfigError::MissingCharFallback);
        }
        Ok(())
    }
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Splits into pieces of at most `max_size` chars. Last-resort fallback.
fn split_by_chars(text: &str, max_size: usize) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut current = String::new();
    let mut count = 0;
    for ch in text.chars() {
        current.push(ch);
        count += 1;
        if count == max_size {
            pieces.push(std::mem::take(&mut current));
            count = 0;
        }
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    pieces
}

/// Recursively segments `text` into pieces of at most `max_size` chars,
/// keeping each separator attached to the piece it terminates so the
/// concatenation of all pieces is exactly `text`.
fn segment(text: &str, separators: &[String], max_size: usize) -> Vec<String> {
    if char_len(text) <= max_size {
        return vec![text.to_string()];
    }
    let Some((sep, rest)) = separators.split_first() else {
        return split_by_chars(text, max_size);
    };
    if sep.is_empty() {
        return split_by_chars(text, max_size);
    }
    if !text.contains(sep.as_str()) {
        return segment(text, rest, max_size);
    }
    let mut out = Vec::new();
    for part in text.split_inclusive(sep.as_str()) {
        if char_len(part) <= max_size {
            out.push(part.to_string());
        } else {
            out.extend(segment(part, rest, max_size));
        }
    }
    out
}

/// Suffix of `prev` to carry into the next chunk: at most `limit` chars,
/// trimmed forward to start just after a separator occurrence when one falls
/// inside the window.
fn overlap_suffix(prev: &str, limit: usize, separators: &[String]) -> String {
    if limit == 0 {
        return String::new();
    }
    let chars: Vec<char> = prev.chars().collect();
    let window_start = chars.len().saturating_sub(limit);
    let window: String = chars[window_start..].iter().collect();
    // Leftmost separator match keeps the longest clean-start overlap.
    let mut best: Option<usize> = None;
    for sep in separators.iter().filter(|s| !s.is_empty()) {
        if let Some(byte_idx) = window.find(sep.as_str()) {
            let end = byte_idx + sep.len();
            best = Some(match best {
                Some(cur) => cur.min(end),
                None => end,
            });
        }
    }
    match best {
        Some(end) if end < window.len() => window[end..].to_string(),
        Some(_) => String::new(),
        None => window,
    }
}

/// Splits `text` into chunk bodies per the config.
///
/// Empty input yields an empty list. Every body is at most `max_size` chars;
/// consecutive bodies share at most `max_overlap` chars, the shared prefix of
/// a body being a suffix of its predecessor.
pub fn recursive_chunk(text: &str, cfg: &ChunkingConfig) -> Vec<String> {
    debug_assert!(cfg.validate().is_ok(), "chunking config must be validated");
    if text.is_empty() {
        return Vec::new();
    }
    let segments = segment(text, &cfg.separators, cfg.max_size);

    let mut chunks: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut current_len = 0usize;
    for seg in segments {
        let seg_len = char_len(&seg);
        if current_len + seg_len <= cfg.max_size {
            current.push_str(&seg);
            current_len += seg_len;
            continue;
        }
        let prev = std::mem::take(&mut current);
        chunks.push(prev);
        let budget = cfg.max_size - seg_len;
        let overlap = overlap_suffix(
            chunks.last().expect("just pushed"),
            cfg.max_overlap.min(budget),
            &cfg.separators,
        );
        current_len = char_len(&overlap) + seg_len;
        current = overlap;
        current.push_str(&seg);
    }
    if !current.is_empty() {
        chunks.push(current);
    }
    chunks
}
