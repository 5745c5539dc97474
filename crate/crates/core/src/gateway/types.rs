//! Chat and embedding wire types.
//!
//! `ChatRequest` serializes to the exact JSON body posted to an
//! OpenAI-compatible `/v1/chat/completions` endpoint, so recorded
//! transcripts double as wire-level audit logs.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};

use super::GatewayError;

/// Message author role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// One chat message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Parameter type accepted by a tool, with an optional inclusive range for
/// integers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamType {
    Boolean,
    Integer { min: Option<i64>, max: Option<i64> },
    String,
}

/// One named, described tool parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub description: String,
    pub kind: ParamType,
    pub required: bool,
}

impl ParamSpec {
    pub fn boolean(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            kind: ParamType::Boolean,
            required: true,
        }
    }

    pub fn integer_range(
        name: impl Into<String>,
        description: impl Into<String>,
        min: i64,
        max: i64,
    ) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            kind: ParamType::Integer {
                min: Some(min),
                max: Some(max),
            },
            required: true,
        }
    }
}

/// A callable tool: name, description and a flat schema of typed parameters.
///
/// Parameters are kept sorted by name so a request round-tripped through its
/// wire form fingerprints identically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolSpec {
    name: String,
    description: String,
    params: Vec<ParamSpec>,
}

impl ToolSpec {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        mut params: Vec<ParamSpec>,
    ) -> Result<Self, GatewayError> {
        let name = name.into();
        if name.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "tool name must be non-empty".into(),
            ));
        }
        if let Some(p) = params.iter().find(|p| p.description.is_empty()) {
            return Err(GatewayError::InvalidRequest(format!(
                "tool '{name}' parameter '{}' is missing a description",
                p.name
            )));
        }
        params.sort_by(|a, b| a.name.cmp(&b.name));
        if let Some(pair) = params.windows(2).find(|w| w[0].name == w[1].name) {
            return Err(GatewayError::InvalidRequest(format!(
                "tool '{name}' declares parameter '{}' twice",
                pair[0].name
            )));
        }
        Ok(Self {
            name,
            description: description.into(),
            params,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn parameters_schema(&self) -> Value {
        let mut properties = Map::new();
        let mut required = Vec::new();
        for p in &self.params {
            let mut prop = Map::new();
            match &p.kind {
                ParamType::Boolean => {
                    prop.insert("type".into(), json!("boolean"));
                }
                ParamType::Integer { min, max } => {
                    prop.insert("type".into(), json!("integer"));
                    if let Some(min) = min {
                        prop.insert("minimum".into(), json!(min));
                    }
                    if let Some(max) = max {
                        prop.insert("maximum".into(), json!(max));
                    }
                }
                ParamType::String => {
                    prop.insert("type".into(), json!("string"));
                }
            }
            prop.insert("description".into(), json!(p.description));
            properties.insert(p.name.clone(), Value::Object(prop));
            if p.required {
                required.push(json!(p.name));
            }
        }
        json!({
            "type": "object",
            "properties": properties,
            "required": required,
            "additionalProperties": false,
        })
    }
}

impl Serialize for ToolSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        json!({
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": self.parameters_schema(),
            }
        })
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ToolSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(deserializer)?;
        let func = v
            .get("function")
            .and_then(Value::as_object)
            .ok_or_else(|| D::Error::custom("tool missing 'function' object"))?;
        let name = func
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| D::Error::custom("tool missing function.name"))?
            .to_string();
        let description = func
            .get("description")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let schema = func.get("parameters").and_then(Value::as_object);
        let mut params = Vec::new();
        if let Some(schema) = schema {
            let required: Vec<&str> = schema
                .get("required")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_str).collect())
                .unwrap_or_default();
            if let Some(props) = schema.get("properties").and_then(Value::as_object) {
                for (pname, pdef) in props {
                    let kind = match pdef.get("type").and_then(Value::as_str) {
                        Some("boolean") => ParamType::Boolean,
                        Some("integer") => ParamType::Integer {
                            min: pdef.get("minimum").and_then(Value::as_i64),
                            max: pdef.get("maximum").and_then(Value::as_i64),
                        },
                        Some("string") => ParamType::String,
                        other => {
                            return Err(D::Error::custom(format!(
                                "unsupported parameter type {other:?} for '{pname}'"
                            )))
                        }
                    };
                    params.push(ParamSpec {
                        name: pname.clone(),
                        description: pdef
                            .get("description")
                            .and_then(Value::as_str)
                            .unwrap_or_default()
                            .to_string(),
                        kind,
                        required: required.contains(&pname.as_str()),
                    });
                }
            }
        }
        ToolSpec::new(name, description, params).map_err(D::Error::custom)
    }
}

/// Directive forcing the model to call one specific tool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolChoice {
    pub name: String,
}

impl ToolChoice {
    pub fn force(name: impl Into<String>) -> Self {
        Self { name: name.into() }
    }
}

impl Serialize for ToolChoice {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        json!({"type": "function", "function": {"name": self.name}}).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ToolChoice {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(deserializer)?;
        let name = v
            .get("function")
            .and_then(|f| f.get("name"))
            .and_then(Value::as_str)
            .ok_or_else(|| D::Error::custom("tool_choice missing function.name"))?;
        Ok(ToolChoice {
            name: name.to_string(),
        })
    }
}

/// A chat-completion request in OpenAI-compatible wire shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(
        rename = "max_tokens",
        skip_serializing_if = "Option::is_none",
        default
    )]
    pub max_output_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub tools: Vec<ToolSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tool_choice: Option<ToolChoice>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature: 0.0,
            max_output_tokens: None,
            tools: Vec::new(),
            tool_choice: None,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_tools(mut self, tools: Vec<ToolSpec>) -> Self {
        self.tools = tools;
        self
    }

    pub fn forcing_tool(mut self, name: impl Into<String>) -> Self {
        self.tool_choice = Some(ToolChoice::force(name));
        self
    }

    /// Checks the request invariants before it goes anywhere near a backend.
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "messages must be non-empty".into(),
            ));
        }
        match self.messages[0].role {
            Role::System | Role::User => {}
            _ => {
                return Err(GatewayError::InvalidRequest(
                    "first message must be system or user".into(),
                ))
            }
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(
                "temperature must be >= 0".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.tools {
            if !seen.insert(t.name()) {
                return Err(GatewayError::InvalidRequest(format!(
                    "duplicate tool name '{}'",
                    t.name()
                )));
            }
        }
        if let Some(choice) = &self.tool_choice {
            if !self.tools.iter().any(|t| t.name() == choice.name) {
                return Err(GatewayError::InvalidRequest(format!(
                    "tool_choice forces unknown tool '{}'",
                    choice.name
                )));
            }
        }
        Ok(())
    }

    /// The concatenated content of every message, used by scripted backends.
    pub fn joined_content(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Content of the last user message, if any.
    pub fn last_user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

/// Provider-reported token usage for one call. Never re-estimated client-side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self {
            input_tokens,
            output_tokens,
        }
    }

    pub fn add(&mut self, other: TokenUsage) {
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
    }
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage::new(
            self.input_tokens + rhs.input_tokens,
            self.output_tokens + rhs.output_tokens,
        )
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> Self {
        iter.fold(TokenUsage::default(), |acc, u| acc + u)
    }
}

/// Why the model stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    ToolCalls,
    Length,
    Other,
}

/// A tool invocation returned by the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallOut {
    pub name: String,
    pub arguments: Map<String, Value>,
}

impl ToolCallOut {
    pub fn bool_arg(&self, name: &str) -> Option<bool> {
        self.arguments.get(name).and_then(Value::as_bool)
    }

    pub fn int_arg(&self, name: &str) -> Option<i64> {
        self.arguments.get(name).and_then(Value::as_i64)
    }
}

/// A chat-completion response reduced to what the pipeline consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tool_call: Option<ToolCallOut>,
    pub usage: TokenUsage,
    pub finish_reason: FinishReason,
}

impl ChatResponse {
    pub fn from_text(text: impl Into<String>, usage: TokenUsage) -> Self {
        Self {
            text: Some(text.into()),
            tool_call: None,
            usage,
            finish_reason: FinishReason::Stop,
        }
    }

    pub fn from_tool_call(
        name: impl Into<String>,
        arguments: Map<String, Value>,
        usage: TokenUsage,
    ) -> Self {
        Self {
            text: None,
            tool_call: Some(ToolCallOut {
                name: name.into(),
                arguments,
            }),
            usage,
            finish_reason: FinishReason::ToolCalls,
        }
    }

    /// Response text, or an error if the model produced none.
    pub fn require_text(&self) -> Result<&str, GatewayError> {
        self.text
            .as_deref()
            .filter(|t| !t.is_empty())
            .ok_or_else(|| GatewayError::Protocol("expected a text reply, got none".into()))
    }
}

/// A fixed-dimension embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// An embedding request in OpenAI-compatible wire shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub model: String,
    pub input: Vec<String>,
}

/// Embedding vectors plus the provider-reported input token count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<EmbeddingVector>,
    pub input_tokens: u64,
}
