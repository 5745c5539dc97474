//! Embedding cache keyed by (model id, content digest).
//!
//! Dataset and store rebuilds re-embed identical chunks; the cache makes the
//! second pass free. Persisted as JSONL beside the store it served.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::types::EmbeddingVector;
use super::GatewayError;

fn content_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    model: String,
    digest: String,
    vector: EmbeddingVector,
}

/// In-memory embedding cache with optional JSONL persistence.
#[derive(Debug, Default)]
pub struct EmbedCache {
    entries: HashMap<(String, String), EmbeddingVector>,
}

impl EmbedCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, model: &str, text: &str) -> Option<&EmbeddingVector> {
        self.entries.get(&(model.to_string(), content_digest(text)))
    }

    pub fn insert(&mut self, model: &str, text: &str, vector: EmbeddingVector) {
        self.entries
            .insert((model.to_string(), content_digest(text)), vector);
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let file = File::open(path)
            .map_err(|e| GatewayError::Io(format!("cannot read cache {}: {e}", path.display())))?;
        let mut cache = Self::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| GatewayError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CacheLine = serde_json::from_str(&line)
                .map_err(|e| GatewayError::Io(format!("bad cache line: {e}")))?;
            cache
                .entries
                .insert((entry.model, entry.digest), entry.vector);
        }
        Ok(cache)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GatewayError> {
        let path = path.as_ref();
        let mut lines: Vec<CacheLine> = self
            .entries
            .iter()
            .map(|((model, digest), vector)| CacheLine {
                model: model.clone(),
                digest: digest.clone(),
                vector: vector.clone(),
            })
            .collect();
        lines.sort_by(|a, b| (&a.model, &a.digest).cmp(&(&b.model, &b.digest)));
        let mut file = File::create(path)
            .map_err(|e| GatewayError::Io(format!("cannot write cache {}: {e}", path.display())))?;
        for line in lines {
            let json = serde_json::to_string(&line).map_err(|e| GatewayError::Io(e.to_string()))?;
            writeln!(file, "{json}").map_err(|e| GatewayError::Io(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_roundtrip() {
        let mut cache = EmbedCache::new();
        cache.insert("ada", "text", EmbeddingVector::new(vec![0.5, -0.5]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embed-cache.jsonl");
        cache.save(&path).unwrap();
        let loaded = EmbedCache::load(&path).unwrap();
        assert_eq!(
            loaded.get("ada", "text"),
            Some(&EmbeddingVector::new(vec![0.5, -0.5]))
        );
        assert!(loaded.get("ada", "other").is_none());
        assert!(loaded.get("babbage", "text").is_none());
    }
}
