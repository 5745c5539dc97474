//! Provider-agnostic chat and embedding gateway with token-usage capture and
//! deterministic record/replay.

mod backend;
mod cache;
mod fingerprint;
pub mod mock;
mod transcript;
mod types;
mod validate;

pub use backend::{Backend, HttpBackend, API_KEY_ENV, BASE_URL_ENV};
pub use cache::EmbedCache;
pub use fingerprint::{chat_fingerprint, embed_fingerprint};
pub use transcript::{read_transcript, ReplayBackend, TranscriptEntry, TranscriptRecorder};
pub use types::{
    ChatMessage, ChatRequest, ChatResponse, EmbedRequest, EmbedResponse, EmbeddingVector,
    FinishReason, ParamSpec, ParamType, Role, TokenUsage, ToolCallOut, ToolChoice, ToolSpec,
};
pub use validate::{validate_arguments, validate_response, ToolCallViolation};

use std::sync::{Arc, Mutex};
use std::time::Duration;

use tokio::sync::Semaphore;

/// Gateway failure modes.
#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("no recorded response for fingerprint {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("io error: {0}")]
    Io(String),
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}

/// Bounded retry schedule: transport failures back off exponentially,
/// schema-invalid tool calls get a fixed number of re-prompts.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_transport_attempts: u32,
    pub backoff_base: Duration,
    pub backoff_factor: f64,
    pub tool_reprompts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_transport_attempts: 3,
            backoff_base: Duration::from_secs(1),
            backoff_factor: 2.0,
            tool_reprompts: 2,
        }
    }
}

impl RetryPolicy {
    /// Millisecond-scale backoff for tests.
    pub fn fast() -> Self {
        Self {
            backoff_base: Duration::from_millis(1),
            ..Self::default()
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = self.backoff_factor.powi(attempt as i32);
        self.backoff_base.mul_f64(factor)
    }
}

/// A chat result plus how many re-prompts it took to get a schema-valid one.
#[derive(Debug, Clone)]
pub struct ChatOutcome {
    pub response: ChatResponse,
    pub retries: u32,
}

/// Shareable client for chat-completion and embedding endpoints.
///
/// In-flight requests are bounded by a semaphore; usage is accumulated per
/// session from the provider-reported numbers of every attempt, matching what
/// a recorded transcript would sum to.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    recorder: Option<TranscriptRecorder>,
    retry: RetryPolicy,
    limiter: Semaphore,
    chat_usage: Mutex<TokenUsage>,
    embed_usage: Mutex<u64>,
    embed_cache: Mutex<EmbedCache>,
    embed_batch_limit: usize,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            recorder: None,
            retry: RetryPolicy::default(),
            limiter: Semaphore::new(4),
            chat_usage: Mutex::new(TokenUsage::default()),
            embed_usage: Mutex::new(0),
            embed_cache: Mutex::new(EmbedCache::new()),
            embed_batch_limit: 64,
        }
    }

    pub fn with_recorder(mut self, recorder: TranscriptRecorder) -> Self {
        self.recorder = Some(recorder);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_concurrency(mut self, limit: usize) -> Self {
        self.limiter = Semaphore::new(limit.max(1));
        self
    }

    pub fn with_embed_cache(mut self, cache: EmbedCache) -> Self {
        self.embed_cache = Mutex::new(cache);
        self
    }

    /// Session totals over every chat attempt this gateway performed.
    pub fn session_usage(&self) -> TokenUsage {
        *self.chat_usage.lock().expect("usage lock poisoned")
    }

    /// Input tokens reported by the embedding endpoint, tracked separately
    /// from chat usage so answer-path accounting stays exact.
    pub fn session_embed_tokens(&self) -> u64 {
        *self.embed_usage.lock().expect("usage lock poisoned")
    }

    pub fn save_embed_cache(&self, path: impl AsRef<std::path::Path>) -> Result<(), GatewayError> {
        self.embed_cache
            .lock()
            .expect("cache lock poisoned")
            .save(path)
    }

    async fn chat_attempt(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut last_err = None;
        for attempt in 0..self.retry.max_transport_attempts {
            if attempt > 0 {
                tokio::time::sleep(self.retry.backoff(attempt - 1)).await;
            }
            match self.backend.chat(req).await {
                Ok(resp) => {
                    self.chat_usage
                        .lock()
                        .expect("usage lock poisoned")
                        .add(resp.usage);
                    if let Some(rec) = &self.recorder {
                        rec.append(&TranscriptEntry::Chat {
                            fingerprint: chat_fingerprint(req),
                            request: req.clone(),
                            response: resp.clone(),
                        })?;
                    }
                    return Ok(resp);
                }
                Err(e) if e.is_retryable() => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.unwrap_or_else(|| GatewayError::Transport("no attempts made".into())))
    }

    /// Sends a chat request, validating any tool call against the request's
    /// tool schemas and re-prompting up to the retry budget on violations.
    pub async fn chat(&self, req: &ChatRequest) -> Result<ChatOutcome, GatewayError> {
        req.validate()?;
        let _permit = self.limiter.acquire().await.expect("semaphore closed");
        let mut retries = 0u32;
        loop {
            let response = self.chat_attempt(req).await?;
            match validate_response(req, &response) {
                Ok(()) => return Ok(ChatOutcome { response, retries }),
                Err(violation) if retries < self.retry.tool_reprompts => {
                    log::warn!("tool call rejected ({violation}); re-prompting");
                    retries += 1;
                }
                Err(violation) => {
                    return Err(GatewayError::Protocol(format!(
                        "tool call still invalid after {retries} re-prompts: {violation}"
                    )))
                }
            }
        }
    }

    /// Embeds a batch of texts, one vector per input in input order.
    ///
    /// Texts already in the cache never reach the backend.
    pub async fn embed(
        &self,
        model: &str,
        texts: &[String],
    ) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if let Some(empty) = texts.iter().position(|t| t.is_empty()) {
            return Err(GatewayError::InvalidRequest(format!(
                "embedding input {empty} is empty"
            )));
        }
        let mut out: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];
        let mut misses: Vec<usize> = Vec::new();
        {
            let cache = self.embed_cache.lock().expect("cache lock poisoned");
            for (i, text) in texts.iter().enumerate() {
                match cache.get(model, text) {
                    Some(v) => out[i] = Some(v.clone()),
                    None => misses.push(i),
                }
            }
        }

        // Dedup misses so one backend call covers repeated texts.
        let mut unique: Vec<&str> = Vec::new();
        for &i in &misses {
            if !unique.contains(&texts[i].as_str()) {
                unique.push(&texts[i]);
            }
        }

        for batch in unique.chunks(self.embed_batch_limit) {
            let req = EmbedRequest {
                model: model.to_string(),
                input: batch.iter().map(|s| s.to_string()).collect(),
            };
            let _permit = self.limiter.acquire().await.expect("semaphore closed");
            let mut last_err = None;
            let mut response = None;
            for attempt in 0..self.retry.max_transport_attempts {
                if attempt > 0 {
                    tokio::time::sleep(self.retry.backoff(attempt - 1)).await;
                }
                match self.backend.embed(&req).await {
                    Ok(r) => {
                        response = Some(r);
                        break;
                    }
                    Err(e) if e.is_retryable() => last_err = Some(e),
                    Err(e) => return Err(e),
                }
            }
            let response = match response {
                Some(r) => r,
                None => return Err(last_err.expect("loop ran at least once")),
            };
            if response.vectors.len() != batch.len() {
                return Err(GatewayError::Protocol(format!(
                    "embedding count mismatch: sent {}, got {}",
                    batch.len(),
                    response.vectors.len()
                )));
            }
            if let Some(first) = response.vectors.first() {
                if response.vectors.iter().any(|v| v.dim() != first.dim()) {
                    return Err(GatewayError::Protocol(
                        "embedding dimensions differ within one batch".into(),
                    ));
                }
            }
            if response.vectors.iter().any(EmbeddingVector::is_zero) {
                return Err(GatewayError::Protocol(
                    "backend returned an all-zero embedding for non-empty text".into(),
                ));
            }
            *self.embed_usage.lock().expect("usage lock poisoned") += response.input_tokens;
            if let Some(rec) = &self.recorder {
                rec.append(&TranscriptEntry::Embed {
                    fingerprint: embed_fingerprint(&req),
                    request: req.clone(),
                    response: response.clone(),
                })?;
            }
            let mut cache = self.embed_cache.lock().expect("cache lock poisoned");
            for (text, vector) in batch.iter().zip(response.vectors) {
                cache.insert(model, text, vector);
            }
        }

        let cache = self.embed_cache.lock().expect("cache lock poisoned");
        for i in misses {
            out[i] = cache.get(model, &texts[i]).cloned();
        }
        Ok(out
            .into_iter()
            .map(|v| v.expect("every index resolved via cache or backend"))
            .collect())
    }

    /// Convenience for single-text embedding.
    pub async fn embed_one(
        &self,
        model: &str,
        text: &str,
    ) -> Result<EmbeddingVector, GatewayError> {
        Ok(self.embed(model, &[text.to_string()]).await?.remove(0))
    }
}
