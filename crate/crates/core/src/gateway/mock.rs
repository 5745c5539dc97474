//! Offline backends: a scripted FIFO mock for tests and a content-seeded
//! deterministic mock used to build the bundled fixtures.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::backend::Backend;
use super::types::{
    ChatRequest, ChatResponse, EmbedRequest, EmbedResponse, EmbeddingVector, ParamType, TokenUsage,
};
use super::GatewayError;

/// Test backend that pops pre-scripted responses in order and logs every
/// request it sees.
#[derive(Default)]
pub struct ScriptedBackend {
    responses: Mutex<VecDeque<ChatResponse>>,
    embeddings: Mutex<VecDeque<EmbedResponse>>,
    pub chat_requests: Mutex<Vec<ChatRequest>>,
    pub embed_requests: Mutex<Vec<EmbedRequest>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_response(&self, resp: ChatResponse) {
        self.responses.lock().unwrap().push_back(resp);
    }

    pub fn push_text(&self, text: &str, usage: TokenUsage) {
        self.push_response(ChatResponse::from_text(text, usage));
    }

    pub fn push_tool_call(&self, name: &str, args: Value, usage: TokenUsage) {
        let arguments: Map<String, Value> = args.as_object().cloned().unwrap_or_default();
        self.push_response(ChatResponse::from_tool_call(name, arguments, usage));
    }

    pub fn push_embeddings(&self, vectors: Vec<EmbeddingVector>, input_tokens: u64) {
        self.embeddings.lock().unwrap().push_back(EmbedResponse {
            vectors,
            input_tokens,
        });
    }

    pub fn chat_count(&self) -> usize {
        self.chat_requests.lock().unwrap().len()
    }
}

#[async_trait]
impl Backend for ScriptedBackend {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.chat_requests.lock().unwrap().push(req.clone());
        self.responses.lock().unwrap().pop_front().ok_or_else(|| {
            GatewayError::Fixture("scripted backend ran out of chat responses".into())
        })
    }

    async fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, GatewayError> {
        self.embed_requests.lock().unwrap().push(req.clone());
        self.embeddings
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| GatewayError::Fixture("scripted backend ran out of embeddings".into()))
    }
}

fn seed64(input: &str) -> u64 {
    let digest = Sha256::digest(input.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}

/// Deterministic unit vector derived from the text content.
pub fn seeded_embedding(text: &str, dim: usize) -> EmbeddingVector {
    let digest = Sha256::digest(text.as_bytes());
    let mut values: Vec<f64> = (0..dim)
        .map(|i| {
            let b = digest[i % digest.len()] as f64;
            // Rotate by position so dims beyond 32 stay independent.
            let r = digest[(i * 7 + 3) % digest.len()] as f64;
            (b - 127.5) / 127.5 + (r - 127.5) / 1275.0
        })
        .collect();
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    }
    EmbeddingVector::new(values)
}

fn approx_tokens(text: &str) -> u64 {
    (text.chars().count() as u64) / 4 + 1
}

/// A fully deterministic stand-in for a live model: replies, tool decisions
/// and usage numbers are pure functions of the request content.
pub struct SeededMockBackend {
    pub embed_dim: usize,
    calls: AtomicU64,
}

impl SeededMockBackend {
    pub fn new(embed_dim: usize) -> Self {
        Self {
            embed_dim,
            calls: AtomicU64::new(0),
        }
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn mock_text_reply(req: &ChatRequest) -> String {
        let basis = req.last_user_content().unwrap_or_default();
        let tag = hex::encode(&Sha256::digest(basis.as_bytes())[..4]);
        // Quote the tail of the input; the head of a RAG prompt is injected
        // context, which would leak into every answer.
        let chars: Vec<char> = basis.chars().collect();
        let topic: String = chars[chars.len().saturating_sub(48)..].iter().collect();
        format!("Mock answer {tag}: drawing on available knowledge about \"{topic}\".")
    }

    fn fill_tool_args(req: &ChatRequest, tool_name: &str) -> Map<String, Value> {
        let basis = req.last_user_content().unwrap_or_default();
        let spec = req
            .tools
            .iter()
            .find(|t| t.name() == tool_name)
            .expect("forced tool exists by request validation");
        let mut args = Map::new();
        for p in spec.params() {
            let seed = seed64(&format!("{basis}|{tool_name}|{}", p.name));
            let value = match &p.kind {
                ParamType::Boolean => Value::Bool(seed.is_multiple_of(2)),
                ParamType::Integer { min, max } => {
                    let lo = min.unwrap_or(1);
                    let hi = max.unwrap_or(lo + 4);
                    let span = (hi - lo + 1).max(1) as u64;
                    Value::from(lo + (seed % span) as i64)
                }
                ParamType::String => Value::String(format!("mock-{}", seed % 1000)),
            };
            args.insert(p.name.clone(), value);
        }
        args
    }
}

#[async_trait]
impl Backend for SeededMockBackend {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let input_tokens = approx_tokens(&req.joined_content());

        if let Some(choice) = &req.tool_choice {
            let args = Self::fill_tool_args(req, &choice.name);
            let usage = TokenUsage::new(input_tokens, 8);
            return Ok(ChatResponse::from_tool_call(
                choice.name.clone(),
                args,
                usage,
            ));
        }

        if let Some(tool) = req.tools.first() {
            // Tool offered but not forced: split deterministically between
            // answering directly, retrieving, and declining to retrieve.
            let basis = req.last_user_content().unwrap_or_default();
            match seed64(&format!("{basis}|offered|{}", tool.name())) % 3 {
                0 => {
                    let text = Self::mock_text_reply(req);
                    let usage = TokenUsage::new(input_tokens, approx_tokens(&text));
                    return Ok(ChatResponse::from_text(text, usage));
                }
                rest => {
                    let mut args = Map::new();
                    for p in tool.params() {
                        let v = match &p.kind {
                            ParamType::Boolean => Value::Bool(rest == 1),
                            ParamType::Integer { min, .. } => Value::from(min.unwrap_or(1)),
                            ParamType::String => Value::String("mock".into()),
                        };
                        args.insert(p.name.clone(), v);
                    }
                    let usage = TokenUsage::new(input_tokens, 6);
                    return Ok(ChatResponse::from_tool_call(
                        tool.name().to_string(),
                        args,
                        usage,
                    ));
                }
            }
        }

        let text = Self::mock_text_reply(req);
        let usage = TokenUsage::new(input_tokens, approx_tokens(&text));
        Ok(ChatResponse::from_text(text, usage))
    }

    async fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let input_tokens = req.input.iter().map(|t| approx_tokens(t)).sum();
        Ok(EmbedResponse {
            vectors: req
                .input
                .iter()
                .map(|t| seeded_embedding(t, self.embed_dim))
                .collect(),
            input_tokens,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::types::{ChatMessage, ParamSpec, ToolSpec};

    #[test]
    fn seeded_embedding_is_deterministic_and_unit() {
        let a = seeded_embedding("hello", 16);
        let b = seeded_embedding("hello", 16);
        assert_eq!(a, b);
        let norm: f64 = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert_ne!(a, seeded_embedding("world", 16));
    }

    #[tokio::test]
    async fn forced_tool_call_honors_schema() {
        let backend = SeededMockBackend::new(8);
        let tool = ToolSpec::new(
            "set_scores",
            "Scores.",
            vec![
                ParamSpec::integer_range("truthfulness", "T.", 1, 5),
                ParamSpec::integer_range("relevance", "R.", 1, 5),
            ],
        )
        .unwrap();
        let req = ChatRequest::new("m", vec![ChatMessage::user("q")])
            .with_tools(vec![tool])
            .forcing_tool("set_scores");
        let resp = backend.chat(&req).await.unwrap();
        let call = resp.tool_call.unwrap();
        let t = call.int_arg("truthfulness").unwrap();
        let r = call.int_arg("relevance").unwrap();
        assert!((1..=5).contains(&t));
        assert!((1..=5).contains(&r));
    }
}
