//! Title-prefixed chunk records, embedding persistence and exact cosine
//! top-k retrieval over a sealed store.
//!
//! Retrieval is an exhaustive scan. At the corpus sizes this tool targets
//! (tens of thousands of chunks) a linear pass is fast enough, and exactness
//! removes approximate-index recall as a confound when comparing strategies.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunk::{recursive_chunk, ChunkingConfig, ChunkingConfigError};
use crate::gateway::{EmbeddingVector, Gateway, GatewayError};
use crate::wiki::Article;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store is empty")]
    Empty,
    #[error("embedding dimension drift: expected {expected}, got {got}")]
    DimDrift { expected: usize, got: usize },
    #[error("query dimension {query} does not match store dimension {store}")]
    DimMismatch { query: usize, store: usize },
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("invalid chunking config: {0}")]
    Config(#[from] ChunkingConfigError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("io error: {0}")]
    Io(String),
}

/// One stored chunk: the chunk body, its page title, the title-prefixed text
/// that actually got embedded, and the embedding itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub chunk_id: u64,
    pub page_id: u64,
    pub title: String,
    pub body: String,
    pub stored_text: String,
    pub vector: EmbeddingVector,
}

/// A retrieval match, ordered by similarity descending with ascending
/// chunk_id breaking ties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: u64,
    pub similarity: f64,
}

/// Immutable, sealed collection of embedded chunks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorStore {
    pub records: Vec<ChunkRecord>,
    pub dim: usize,
    pub config: ChunkingConfig,
    pub embed_model: String,
}

/// Sidecar metadata persisted as `store.meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreMeta {
    pub dim: usize,
    pub config: ChunkingConfig,
    pub embed_model: String,
    pub n_records: usize,
    pub n_articles: usize,
}

/// Cosine similarity of two equal-dimension non-zero vectors.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, StoreError> {
    if a.dim() != b.dim() {
        return Err(StoreError::DimMismatch {
            query: a.dim(),
            store: b.dim(),
        });
    }
    let mut dot = 0.0;
    let mut norm_a = 0.0;
    let mut norm_b = 0.0;
    for (x, y) in a.values.iter().zip(&b.values) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(StoreError::ZeroVector);
    }
    Ok(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

/// Heap entry ordered so the binary heap evicts the *worst* hit first.
#[derive(PartialEq)]
struct HeapHit(RetrievalHit);

impl Eq for HeapHit {}

impl PartialOrd for HeapHit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapHit {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap by "badness": lower similarity first, then higher chunk_id.
        other
            .0
            .similarity
            .partial_cmp(&self.0.similarity)
            .expect("similarities are finite")
            .then_with(|| self.0.chunk_id.cmp(&other.0.chunk_id))
    }
}

impl VectorStore {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, chunk_id: u64) -> Option<&ChunkRecord> {
        self.records
            .get(chunk_id as usize)
            .filter(|r| r.chunk_id == chunk_id)
    }

    /// Exact top-k hits for `query`, equivalent to a full sorted scan.
    ///
    /// Uses a bounded selection heap rather than sorting the whole score
    /// list, so the acceptance oracle (a full sort) is an independent route.
    pub fn top_k(
        &self,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<RetrievalHit>, StoreError> {
        if query.dim() != self.dim {
            return Err(StoreError::DimMismatch {
                query: query.dim(),
                store: self.dim,
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<HeapHit> = BinaryHeap::with_capacity(k + 1);
        for record in &self.records {
            let similarity = cosine(query, &record.vector)?;
            heap.push(HeapHit(RetrievalHit {
                chunk_id: record.chunk_id,
                similarity,
            }));
            if heap.len() > k {
                heap.pop();
            }
        }
        let mut hits: Vec<RetrievalHit> = heap.into_iter().map(|h| h.0).collect();
        hits.sort_by(|a, b| {
            b.similarity
                .partial_cmp(&a.similarity)
                .expect("similarities are finite")
                .then_with(|| a.chunk_id.cmp(&b.chunk_id))
        });
        Ok(hits)
    }

    pub fn save(&self, store_path: impl AsRef<Path>) -> Result<(), StoreError> {
        let store_path = store_path.as_ref();
        let mut file = File::create(store_path)
            .map_err(|e| StoreError::Io(format!("cannot write {}: {e}", store_path.display())))?;
        for record in &self.records {
            let line = serde_json::to_string(record).map_err(|e| StoreError::Io(e.to_string()))?;
            writeln!(file, "{line}").map_err(|e| StoreError::Io(e.to_string()))?;
        }
        let meta = StoreMeta {
            dim: self.dim,
            config: self.config.clone(),
            embed_model: self.embed_model.clone(),
            n_records: self.records.len(),
            n_articles: {
                let mut pages: Vec<u64> = self.records.iter().map(|r| r.page_id).collect();
                pages.dedup();
                pages.len()
            },
        };
        let meta_path = meta_path_for(store_path);
        let json =
            serde_json::to_string_pretty(&meta).map_err(|e| StoreError::Io(e.to_string()))?;
        std::fs::write(&meta_path, json + "\n")
            .map_err(|e| StoreError::Io(format!("cannot write {}: {e}", meta_path.display())))?;
        Ok(())
    }

    pub fn load(store_path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let store_path = store_path.as_ref();
        let meta_path = meta_path_for(store_path);
        let meta: StoreMeta =
            serde_json::from_str(&std::fs::read_to_string(&meta_path).map_err(|e| {
                StoreError::Io(format!("cannot read {}: {e}", meta_path.display()))
            })?)
            .map_err(|e| StoreError::Io(format!("bad store meta: {e}")))?;
        let file = File::open(store_path)
            .map_err(|e| StoreError::Io(format!("cannot read {}: {e}", store_path.display())))?;
        let mut records = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| StoreError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ChunkRecord = serde_json::from_str(&line)
                .map_err(|e| StoreError::Io(format!("bad record: {e}")))?;
            if record.vector.dim() != meta.dim {
                return Err(StoreError::DimDrift {
                    expected: meta.dim,
                    got: record.vector.dim(),
                });
            }
            records.push(record);
        }
        if records.is_empty() {
            return Err(StoreError::Empty);
        }
        Ok(Self {
            records,
            dim: meta.dim,
            config: meta.config,
            embed_model: meta.embed_model,
        })
    }
}

fn meta_path_for(store_path: &Path) -> std::path::PathBuf {
    let stem = store_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("store");
    store_path.with_file_name(format!("{stem}.meta.json"))
}

/// Chunks every article, prefixes each chunk with its page title, embeds the
/// stored texts through the gateway and seals the result.
pub async fn build_store(
    gateway: &Gateway,
    embed_model: &str,
    articles: &[Article],
    cfg: &ChunkingConfig,
) -> Result<VectorStore, StoreError> {
    cfg.validate()?;
    if articles.is_empty() {
        return Err(StoreError::Empty);
    }
    let mut partial: Vec<(u64, String, String, String)> = Vec::new();
    for article in articles {
        for body in recursive_chunk(&article.text, cfg) {
            let stored_text = format!("{}\n{}", article.title, body);
            partial.push((article.page_id, article.title.clone(), body, stored_text));
        }
    }
    let texts: Vec<String> = partial
        .iter()
        .map(|(_, _, _, stored)| stored.clone())
        .collect();
    let vectors = gateway.embed(embed_model, &texts).await?;

    let dim = vectors.first().map(EmbeddingVector::dim).unwrap_or(0);
    let mut records = Vec::with_capacity(partial.len());
    for (chunk_id, ((page_id, title, body, stored_text), vector)) in
        partial.into_iter().zip(vectors).enumerate()
    {
        if vector.dim() != dim {
            return Err(StoreError::DimDrift {
                expected: dim,
                got: vector.dim(),
            });
        }
        records.push(ChunkRecord {
            chunk_id: chunk_id as u64,
            page_id,
            title,
            body,
            stored_text,
            vector,
        });
    }
    Ok(VectorStore {
        records,
        dim,
        config: cfg.clone(),
        embed_model: embed_model.to_string(),
    })
}
