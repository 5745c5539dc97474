//! Content fingerprints for record/replay lookup.
//!
//! The digest is a SHA-256 over the canonical JSON form of a request:
//! object keys sorted (serde_json's default map ordering), array order
//! preserved, field content untouched. Array order is semantic — two
//! requests whose tools lists differ only in order fingerprint differently.

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::types::{ChatRequest, EmbedRequest};

fn digest_of<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_value(value).expect("request serialization cannot fail");
    let bytes = serde_json::to_vec(&canonical).expect("value serialization cannot fail");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hex::encode(hasher.finalize())
}

/// Stable digest of a chat request.
pub fn chat_fingerprint(req: &ChatRequest) -> String {
    digest_of(req)
}

/// Stable digest of an embedding request.
pub fn embed_fingerprint(req: &EmbedRequest) -> String {
    digest_of(req)
}
