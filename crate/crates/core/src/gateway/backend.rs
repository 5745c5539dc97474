//! Backend abstraction and the live HTTP implementation.

use async_trait::async_trait;
use serde_json::Value;

use super::types::{
    ChatRequest, ChatResponse, EmbedRequest, EmbedResponse, EmbeddingVector, FinishReason,
    TokenUsage, ToolCallOut,
};
use super::GatewayError;

/// Where requests actually go: a live endpoint, a replay transcript, or a mock.
#[async_trait]
pub trait Backend: Send + Sync {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    async fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, GatewayError>;
}

/// Environment variable holding the API key for live calls.
pub const API_KEY_ENV: &str = "RAGFORGE_API_KEY";
/// Environment variable overriding the endpoint base URL.
pub const BASE_URL_ENV: &str = "RAGFORGE_BASE_URL";

const DEFAULT_BASE_URL: &str = "https://api.openai.com";

/// Live client for any OpenAI-compatible endpoint.
pub struct HttpBackend {
    base_url: String,
    api_key: Option<String>,
    client: reqwest::Client,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            client: reqwest::Client::builder()
                .timeout(std::time::Duration::from_secs(120))
                .build()
                .expect("client construction cannot fail"),
        }
    }

    /// Builds a backend from `RAGFORGE_BASE_URL` / `RAGFORGE_API_KEY`.
    pub fn from_env() -> Self {
        let base = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        let key = std::env::var(API_KEY_ENV).ok();
        Self::new(base, key)
    }

    async fn post_json(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = format!("{}{}", self.base_url, path);
        let mut req = self.client.post(&url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(GatewayError::Transport(format!("{url} returned {status}")));
        }
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(GatewayError::Protocol(format!(
                "{url} returned {status}: {body}"
            )));
        }
        resp.json()
            .await
            .map_err(|e| GatewayError::Protocol(format!("invalid JSON from {url}: {e}")))
    }
}

fn parse_usage(v: &Value) -> TokenUsage {
    let usage = &v["usage"];
    TokenUsage::new(
        usage["prompt_tokens"].as_u64().unwrap_or(0),
        usage["completion_tokens"].as_u64().unwrap_or(0),
    )
}

fn parse_chat_response(v: &Value) -> Result<ChatResponse, GatewayError> {
    let choice = v["choices"]
        .get(0)
        .ok_or_else(|| GatewayError::Protocol("response has no choices".into()))?;
    let message = &choice["message"];
    let text = message["content"]
        .as_str()
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    let tool_call = match message["tool_calls"].get(0) {
        Some(tc) => {
            let name = tc["function"]["name"]
                .as_str()
                .ok_or_else(|| GatewayError::Protocol("tool call without a name".into()))?
                .to_string();
            let raw_args = tc["function"]["arguments"].as_str().unwrap_or("{}");
            let arguments: serde_json::Map<String, Value> = serde_json::from_str(raw_args)
                .map_err(|e| GatewayError::Protocol(format!("unparsable tool arguments: {e}")))?;
            Some(ToolCallOut { name, arguments })
        }
        None => None,
    };
    if text.is_none() && tool_call.is_none() {
        return Err(GatewayError::Protocol(
            "response carries neither text nor a tool call".into(),
        ));
    }
    let finish_reason = match choice["finish_reason"].as_str() {
        Some("stop") => FinishReason::Stop,
        Some("tool_calls") => FinishReason::ToolCalls,
        Some("length") => FinishReason::Length,
        _ => FinishReason::Other,
    };
    Ok(ChatResponse {
        text,
        tool_call,
        usage: parse_usage(v),
        finish_reason,
    })
}

#[async_trait]
impl Backend for HttpBackend {
    async fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let body = serde_json::to_value(req).expect("request serialization cannot fail");
        let v = self.post_json("/v1/chat/completions", &body).await?;
        parse_chat_response(&v)
    }

    async fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, GatewayError> {
        let body = serde_json::to_value(req).expect("request serialization cannot fail");
        let v = self.post_json("/v1/embeddings", &body).await?;
        let data = v["data"]
            .as_array()
            .ok_or_else(|| GatewayError::Protocol("embedding response missing data".into()))?;
        let mut indexed: Vec<(usize, EmbeddingVector)> = Vec::with_capacity(data.len());
        for item in data {
            let idx = item["index"].as_u64().unwrap_or(indexed.len() as u64) as usize;
            let values: Vec<f64> = item["embedding"]
                .as_array()
                .ok_or_else(|| GatewayError::Protocol("embedding entry missing vector".into()))?
                .iter()
                .map(|x| x.as_f64().unwrap_or(0.0))
                .collect();
            indexed.push((idx, EmbeddingVector::new(values)));
        }
        indexed.sort_by_key(|(i, _)| *i);
        Ok(EmbedResponse {
            vectors: indexed.into_iter().map(|(_, v)| v).collect(),
            input_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
        })
    }
}
