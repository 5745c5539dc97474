//! Record/replay transcripts.
//!
//! A transcript is a JSONL file of `(fingerprint, request, response)` entries,
//! one per backend attempt, so a recorded run — retries included — replays
//! exactly. Replay looks entries up by fingerprint; repeated fingerprints are
//! served in recorded order, and the last entry repeats once the sequence is
//! exhausted so re-runs that issue more identical calls than were recorded
//! (e.g. after an embed-cache reset) still resolve.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::backend::Backend;
use super::fingerprint::{chat_fingerprint, embed_fingerprint};
use super::types::{ChatRequest, ChatResponse, EmbedRequest, EmbedResponse};
use super::GatewayError;

/// One recorded exchange.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Chat {
        fingerprint: String,
        request: ChatRequest,
        response: ChatResponse,
    },
    Embed {
        fingerprint: String,
        request: EmbedRequest,
        response: EmbedResponse,
    },
}

impl TranscriptEntry {
    pub fn fingerprint(&self) -> &str {
        match self {
            Self::Chat { fingerprint, .. } | Self::Embed { fingerprint, .. } => fingerprint,
        }
    }
}

/// Append-only transcript writer. Appends are serialized by a mutex.
pub struct TranscriptRecorder {
    path: PathBuf,
    file: Mutex<File>,
}

impl TranscriptRecorder {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| {
                GatewayError::Io(format!("cannot open transcript {}: {e}", path.display()))
            })?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &TranscriptEntry) -> Result<(), GatewayError> {
        let line = serde_json::to_string(entry)
            .map_err(|e| GatewayError::Io(format!("transcript serialization failed: {e}")))?;
        let mut file = self.file.lock().expect("transcript lock poisoned");
        writeln!(file, "{line}")
            .map_err(|e| GatewayError::Io(format!("transcript append failed: {e}")))?;
        Ok(())
    }
}

/// Reads every entry of a transcript file.
pub fn read_transcript(path: impl AsRef<Path>) -> Result<Vec<TranscriptEntry>, GatewayError> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| GatewayError::Io(format!("cannot read transcript {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GatewayError::Io(format!("transcript read failed: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TranscriptEntry = serde_json::from_str(&line).map_err(|e| {
            GatewayError::Io(format!(
                "bad transcript line {} in {}: {e}",
                lineno + 1,
                path.display()
            ))
        })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Serves recorded responses keyed by request fingerprint.
pub struct ReplayBackend {
    chats: HashMap<String, Vec<ChatResponse>>,
    embeds: HashMap<String, Vec<EmbedResponse>>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl ReplayBackend {
    pub fn from_entries(entries: Vec<TranscriptEntry>) -> Self {
        let mut chats: HashMap<String, Vec<ChatResponse>> = HashMap::new();
        let mut embeds: HashMap<String, Vec<EmbedResponse>> = HashMap::new();
        for entry in entries {
            match entry {
                TranscriptEntry::Chat {
                    fingerprint,
                    response,
                    ..
                } => {
                    chats.entry(fingerprint).or_default().push(response);
                }
                TranscriptEntry::Embed {
                    fingerprint,
                    response,
                    ..
                } => {
                    embeds.entry(fingerprint).or_default().push(response);
                }
            }
        }
        Self {
            chats,
            embeds,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Ok(Self::from_entries(read_transcript(path)?))
    }

    fn next_index(&self, fingerprint: &str, available: usize) -> usize {
        let mut cursors = self.cursors.lock().expect("cursor lock poisoned");
        let slot = cursors.entry(fingerprint.to_string()).or_insert(0);
        let idx = (*slot).min(available - 1);
        *slot += 1;
        idx
    }
}

#[async_trait]
impl Backend for ReplayBackend {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let fp = chat_fingerprint(req);
        let recorded = self
            .chats
            .get(&fp)
            .ok_or_else(|| GatewayError::ReplayMiss {
                fingerprint: fp.clone(),
            })?;
        Ok(recorded[self.next_index(&fp, recorded.len())].clone())
    }

    async fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, GatewayError> {
        let fp = embed_fingerprint(req);
        let recorded = self
            .embeds
            .get(&fp)
            .ok_or_else(|| GatewayError::ReplayMiss {
                fingerprint: fp.clone(),
            })?;
        Ok(recorded[self.next_index(&fp, recorded.len())].clone())
    }
}
