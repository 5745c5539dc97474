//! Independent verification oracles used by the test suites.
//!
//! Everything here deliberately re-derives results through a different route
//! than the production code: the chunk checker aligns chunks against the
//! original text without knowing the chunker's overlap choices, the reference
//! splitter is a separate greedy packer, and the retrieval oracle is a full
//! sorted scan rather than a selection heap.

use std::collections::HashSet;

use crate::chunk::ChunkingConfig;
use crate::gateway::EmbeddingVector;
use crate::store::{cosine, RetrievalHit, VectorStore};

/// Checks the size-bound, overlap-bound and coverage invariants of a chunking
/// by searching for an alignment of the chunks over the original text where
/// each chunk after the first starts with a suffix of its predecessor of at
/// most `max_overlap` characters.
pub fn check_chunk_invariants(
    text: &str,
    chunks: &[String],
    cfg: &ChunkingConfig,
) -> Result<(), String> {
    let text_chars: Vec<char> = text.chars().collect();
    if text_chars.is_empty() {
        return if chunks.is_empty() {
            Ok(())
        } else {
            Err("empty text must yield no chunks".into())
        };
    }
    if chunks.is_empty() {
        return Err("non-empty text yielded no chunks".into());
    }
    let chunk_chars: Vec<Vec<char>> = chunks.iter().map(|c| c.chars().collect()).collect();
    for (i, chunk) in chunk_chars.iter().enumerate() {
        if chunk.is_empty() {
            return Err(format!("chunk {i} is empty"));
        }
        if chunk.len() > cfg.max_size {
            return Err(format!(
                "chunk {i} has {} chars, exceeding max_size {}",
                chunk.len(),
                cfg.max_size
            ));
        }
    }

    // First chunk carries no overlap: it must sit at position 0.
    let first = &chunk_chars[0];
    if first.len() > text_chars.len() || first[..] != text_chars[..first.len()] {
        return Err("first chunk does not match the start of the text".into());
    }

    // Depth-first alignment over (chunk index, text position), memoized so
    // ambiguous overlaps (repetitive text) stay tractable.
    let mut stack: Vec<(usize, usize)> = vec![(1, first.len())];
    let mut visited: HashSet<(usize, usize)> = HashSet::new();
    while let Some((idx, pos)) = stack.pop() {
        if idx == chunk_chars.len() {
            if pos == text_chars.len() {
                return Ok(());
            }
            continue;
        }
        if !visited.insert((idx, pos)) {
            continue;
        }
        let chunk = &chunk_chars[idx];
        let prev = &chunk_chars[idx - 1];
        let k_max = cfg.max_overlap.min(chunk.len()).min(prev.len());
        for k in 0..=k_max {
            if chunk[..k] != prev[prev.len() - k..] {
                continue;
            }
            let fresh = chunk.len() - k;
            if pos + fresh > text_chars.len() {
                continue;
            }
            if chunk[k..] != text_chars[pos..pos + fresh] {
                continue;
            }
            stack.push((idx + 1, pos + fresh));
        }
    }
    Err("no overlap alignment reconstructs the original text".into())
}

/// Reference splitter: segments the text by walking the separator list with
/// an explicit work queue, then packs whole segments greedily, carrying a
/// separator-trimmed overlap. Kept separate from the production chunker so
/// the two can disagree.
pub fn reference_chunker(text: &str, cfg: &ChunkingConfig) -> Vec<String> {
    if text.is_empty() {
        return Vec::new();
    }
    // Segmentation via work queue of (piece, separator depth).
    let mut segments: Vec<String> = Vec::new();
    let mut queue: Vec<(String, usize)> = vec![(text.to_string(), 0)];
    while let Some((piece, depth)) = queue.pop() {
        if piece.chars().count() <= cfg.max_size {
            segments.push(piece);
            continue;
        }
        let sep = cfg.separators.get(depth).map(String::as_str).unwrap_or("");
        if sep.is_empty() {
            let chars: Vec<char> = piece.chars().collect();
            for slice in chars.chunks(cfg.max_size) {
                segments.push(slice.iter().collect());
            }
            continue;
        }
        if !piece.contains(sep) {
            queue.push((piece, depth + 1));
            continue;
        }
        // Reverse push keeps document order with a LIFO queue.
        let parts: Vec<&str> = piece.split_inclusive(sep).collect();
        for part in parts.into_iter().rev() {
            queue.push((part.to_string(), depth + 1));
        }
    }

    // Greedy packing.
    let mut out: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut current_len = 0usize;
    for seg in segments {
        let seg_len = seg.chars().count();
        if current_len + seg_len <= cfg.max_size {
            current.push_str(&seg);
            current_len += seg_len;
            continue;
        }
        out.push(std::mem::take(&mut current));
        let carried = trimmed_overlap(
            out.last().expect("just pushed"),
            cfg.max_overlap.min(cfg.max_size - seg_len),
            &cfg.separators,
        );
        current_len = carried.chars().count() + seg_len;
        current = carried + &seg;
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

fn trimmed_overlap(prev: &str, limit: usize, separators: &[String]) -> String {
    if limit == 0 {
        return String::new();
    }
    let chars: Vec<char> = prev.chars().collect();
    let window: String = chars[chars.len().saturating_sub(limit)..].iter().collect();
    let mut cut: Option<usize> = None;
    for sep in separators.iter().filter(|s| !s.is_empty()) {
        if let Some(at) = window.find(sep.as_str()) {
            let end = at + sep.len();
            cut = Some(cut.map_or(end, |c: usize| c.min(end)));
        }
    }
    match cut {
        Some(end) if end < window.len() => window[end..].to_string(),
        Some(_) => String::new(),
        None => window,
    }
}

/// Exhaustive-scan retrieval oracle: score everything, sort, truncate.
pub fn brute_force_top_k(
    store: &VectorStore,
    query: &EmbeddingVector,
    k: usize,
) -> Vec<RetrievalHit> {
    let mut hits: Vec<RetrievalHit> = store
        .records
        .iter()
        .map(|r| RetrievalHit {
            chunk_id: r.chunk_id,
            similarity: cosine(query, &r.vector).expect("oracle inputs are valid"),
        })
        .collect();
    hits.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .expect("finite similarities")
            .then_with(|| a.chunk_id.cmp(&b.chunk_id))
    });
    hits.truncate(k);
    hits
}
