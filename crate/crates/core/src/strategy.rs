//! Answering strategies: no-RAG baseline, naive RAG, and the simple and
//! advanced boolean-agent RAG setups.
//!
//! Advanced BARAG first produces a baseline answer, then forces a boolean
//! decision on whether more information would have improved it, and only
//! retrieves when the model says yes. Retrieval always embeds the user
//! question itself.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::QAPair;
use crate::gateway::{
    ChatMessage, ChatRequest, Gateway, GatewayError, ParamSpec, TokenUsage, ToolSpec,
};
use crate::store::{RetrievalHit, StoreError, VectorStore};

/// System prompt shared by every strategy, kept minimal so strategy deltas,
/// not prompt craft, drive score differences.
pub const ANSWER_SYSTEM_PROMPT: &str = "You are a helpful assistant. Answer the user's question.";

/// Simple BARAG retrieval tool.
pub const RETRIEVE_TOOL_NAME: &str = "retrieve";
pub const RETRIEVE_TOOL_DESCRIPTION: &str = "Set retrieve to true to query a vector database of \
Wikipedia articles for additional information before answering. Only do this if it is necessary \
to answer the question.";
pub const RETRIEVE_PARAM: &str = "retrieve";

/// Admonition appended to the system prompt by the token-saving variant.
pub const TOKEN_SAVING_ADMONITION: &str = "If it is at all possible to answer a question without \
querying the database you should do so in order to save tokens";

/// Replacement system prompt used by the self-awareness variant.
pub const SELF_AWARE_SYSTEM_PROMPT: &str =
    "You are a knowledgeable AI that has been trained on large parts of the internet.";

/// Advanced BARAG decision tool.
pub const DECISION_TOOL_NAME: &str = "set_need_more_information";
pub const DECISION_TOOL_DESCRIPTION: &str =
    "Set to true if you could have answered the last question better with more information";
pub const DECISION_PARAM: &str = "need_more_information";

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("io error: {0}")]
    Io(String),
}

/// Which answering strategy a run used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    NoRag,
    NaiveRag,
    SimpleBarag,
    AdvancedBarag,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        Self::NoRag,
        Self::NaiveRag,
        Self::SimpleBarag,
        Self::AdvancedBarag,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::NoRag => "no-rag",
            Self::NaiveRag => "naive-rag",
            Self::SimpleBarag => "simple-barag",
            Self::AdvancedBarag => "advanced-barag",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "no-rag" | "norag" | "baseline" => Some(Self::NoRag),
            "naive-rag" | "nrag" => Some(Self::NaiveRag),
            "simple-barag" => Some(Self::SimpleBarag),
            "advanced-barag" | "barag" => Some(Self::AdvancedBarag),
            _ => None,
        }
    }

    /// Column label used by the comparison table.
    pub fn table_label(&self) -> &'static str {
        match self {
            Self::NoRag => "Baseline",
            Self::NaiveRag => "NRAG",
            Self::SimpleBarag => "SBARAG",
            Self::AdvancedBarag => "BARAG",
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Simple BARAG prompt variants the paper experimented with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimpleBaragVariant {
    #[default]
    Plain,
    TokenSaving,
    SelfAware,
}

impl SimpleBaragVariant {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "plain" => Some(Self::Plain),
            "token-saving" => Some(Self::TokenSaving),
            "self-aware" => Some(Self::SelfAware),
            _ => None,
        }
    }

    fn system_prompt(&self) -> String {
        match self {
            Self::Plain => ANSWER_SYSTEM_PROMPT.to_string(),
            Self::TokenSaving => format!("{ANSWER_SYSTEM_PROMPT} {TOKEN_SAVING_ADMONITION}"),
            Self::SelfAware => {
                format!("{SELF_AWARE_SYSTEM_PROMPT} {ANSWER_SYSTEM_PROMPT}")
            }
        }
    }
}

/// What one chat call was for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallPurpose {
    Baseline,
    Decision,
    Final,
}

/// Usage of one chat call within a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub purpose: CallPurpose,
    pub usage: TokenUsage,
}

/// Identifies the question a trace answered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRef {
    pub page_id: u64,
    pub question: String,
}

impl From<&QAPair> for QuestionRef {
    fn from(pair: &QAPair) -> Self {
        Self {
            page_id: pair.page_id,
            question: pair.question.clone(),
        }
    }
}

/// Retrieved context rendered for prompt injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub hits: Vec<RetrievalHit>,
    pub rendered: String,
}

/// Renders hits as source-labelled blocks, in hit order, separated by blank
/// lines. Titles are already inside each stored text; the header makes the
/// provenance auditable by the judge reader.
pub fn render_context(store: &VectorStore, hits: &[RetrievalHit]) -> ContextBlock {
    let rendered = hits
        .iter()
        .filter_map(|h| store.record(h.chunk_id))
        .map(|r| format!("[[source: {}]]\n{}", r.title, r.stored_text))
        .collect::<Vec<_>>()
        .join("\n\n");
    ContextBlock {
        hits: hits.to_vec(),
        rendered,
    }
}

/// Per-question record of what a strategy did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerTrace {
    pub question_ref: QuestionRef,
    pub kind: StrategyKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub baseline_answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decision: Option<bool>,
    pub retrieved: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hits: Option<Vec<RetrievalHit>>,
    pub final_answer: String,
    pub calls: Vec<CallRecord>,
}

impl AnswerTrace {
    /// Exact token totals over every call of this trace.
    pub fn total_usage(&self) -> TokenUsage {
        self.calls.iter().map(|c| c.usage).sum()
    }

    /// Structural invariants shared by all strategies.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.retrieved != self.hits.is_some() {
            return Err("retrieved flag must match hits presence".into());
        }
        if self.calls.is_empty() {
            return Err("trace must record at least one call".into());
        }
        match self.kind {
            StrategyKind::NoRag => {
                if self.retrieved || self.calls.len() != 1 {
                    return Err("no-rag trace must have one call and no retrieval".into());
                }
            }
            StrategyKind::NaiveRag => {
                if !self.retrieved || self.calls.len() != 1 {
                    return Err("naive-rag trace must have one call and a retrieval".into());
                }
            }
            StrategyKind::SimpleBarag => {}
            StrategyKind::AdvancedBarag => {
                let Some(decision) = self.decision else {
                    return Err("advanced-barag trace must record a decision".into());
                };
                if self.retrieved != decision {
                    return Err("advanced-barag retrieval must follow the decision".into());
                }
                let expected_calls = if decision { 3 } else { 2 };
                if self.calls.len() != expected_calls {
                    return Err(format!(
                        "advanced-barag trace with decision={decision} must have {expected_calls} calls"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Settings shared by a strategy run.
#[derive(Debug, Clone)]
pub struct StrategyConfig {
    pub answer_model: String,
    pub embed_model: String,
    pub answer_temperature: f64,
    pub k: usize,
    pub variant: SimpleBaragVariant,
    pub concurrency: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            answer_model: "gpt-4".into(),
            embed_model: "text-embedding-ada-002".into(),
            answer_temperature: 0.0,
            k: 5,
            variant: SimpleBaragVariant::Plain,
            concurrency: 4,
        }
    }
}

fn answer_request(cfg: &StrategyConfig, messages: Vec<ChatMessage>) -> ChatRequest {
    ChatRequest::new(&cfg.answer_model, messages).with_temperature(cfg.answer_temperature)
}

fn retrieve_tool() -> ToolSpec {
    ToolSpec::new(
        RETRIEVE_TOOL_NAME,
        RETRIEVE_TOOL_DESCRIPTION,
        vec![ParamSpec::boolean(
            RETRIEVE_PARAM,
            "True to query the vector database for additional information.",
        )],
    )
    .expect("static tool spec is valid")
}

fn decision_tool() -> ToolSpec {
    ToolSpec::new(
        DECISION_TOOL_NAME,
        DECISION_TOOL_DESCRIPTION,
        vec![ParamSpec::boolean(
            DECISION_PARAM,
            "True if more information would have improved the answer.",
        )],
    )
    .expect("static tool spec is valid")
}

/// Answers with no retrieval: one plain chat call.
pub async fn answer_norag(
    gateway: &Gateway,
    cfg: &StrategyConfig,
    q: &QAPair,
) -> Result<AnswerTrace, StrategyError> {
    let req = answer_request(
        cfg,
        vec![
            ChatMessage::system(ANSWER_SYSTEM_PROMPT),
            ChatMessage::user(&q.question),
        ],
    );
    let outcome = gateway.chat(&req).await?;
    let final_answer = outcome.response.require_text()?.to_string();
    Ok(AnswerTrace {
        question_ref: q.into(),
        kind: StrategyKind::NoRag,
        baseline_answer: None,
        decision: None,
        retrieved: false,
        hits: None,
        final_answer,
        calls: vec![CallRecord {
            purpose: CallPurpose::Final,
            usage: outcome.response.usage,
        }],
    })
}

/// Naive RAG: embed the question, retrieve top-k, inject, answer. Retrieval
/// happens for every query.
pub async fn answer_naive(
    gateway: &Gateway,
    cfg: &StrategyConfig,
    store: &VectorStore,
    q: &QAPair,
) -> Result<AnswerTrace, StrategyError> {
    let query = gateway.embed_one(&cfg.embed_model, &q.question).await?;
    let hits = store.top_k(&query, cfg.k)?;
    let context = render_context(store, &hits);
    let user = format!("{}\n\n{}", context.rendered, q.question);
    let req = answer_request(
        cfg,
        vec![
            ChatMessage::system(ANSWER_SYSTEM_PROMPT),
            ChatMessage::user(user),
        ],
    );
    let outcome = gateway.chat(&req).await?;
    let final_answer = outcome.response.require_text()?.to_string();
    Ok(AnswerTrace {
        question_ref: q.into(),
        kind: StrategyKind::NaiveRag,
        baseline_answer: None,
        decision: None,
        retrieved: true,
        hits: Some(context.hits),
        final_answer,
        calls: vec![CallRecord {
            purpose: CallPurpose::Final,
            usage: outcome.response.usage,
        }],
    })
}

/// Simple BARAG: offer (don't force) a boolean retrieve tool. If the model
/// answers directly that is the final answer; if it calls the tool, a second
/// call produces the answer, with context injected when retrieve was true.
pub async fn answer_simple_barag(
    gateway: &Gateway,
    cfg: &StrategyConfig,
    store: &VectorStore,
    q: &QAPair,
) -> Result<AnswerTrace, StrategyError> {
    let system = cfg.variant.system_prompt();
    let first = answer_request(
        cfg,
        vec![ChatMessage::system(&system), ChatMessage::user(&q.question)],
    )
    .with_tools(vec![retrieve_tool()]);
    let outcome = gateway.chat(&first).await?;

    let Some(call) = &outcome.response.tool_call else {
        // Model answered directly without touching the tool.
        let final_answer = outcome.response.require_text()?.to_string();
        return Ok(AnswerTrace {
            question_ref: q.into(),
            kind: StrategyKind::SimpleBarag,
            baseline_answer: None,
            decision: None,
            retrieved: false,
            hits: None,
            final_answer,
            calls: vec![CallRecord {
                purpose: CallPurpose::Final,
                usage: outcome.response.usage,
            }],
        });
    };
    let decision = call.bool_arg(RETRIEVE_PARAM).unwrap_or(false);
    let mut calls = vec![CallRecord {
        purpose: CallPurpose::Decision,
        usage: outcome.response.usage,
    }];

    let (hits, follow_up) = if decision {
        let query = gateway.embed_one(&cfg.embed_model, &q.question).await?;
        let hits = store.top_k(&query, cfg.k)?;
        let context = render_context(store, &hits);
        let text = format!(
            "You chose to query the database. Retrieved information:\n\n{}\n\nAnswer the original question.",
            context.rendered
        );
        (Some(context.hits), text)
    } else {
        (
            None,
            "You chose not to query the database. Answer the original question.".to_string(),
        )
    };

    let second = answer_request(
        cfg,
        vec![
            ChatMessage::system(&system),
            ChatMessage::user(&q.question),
            ChatMessage::user(follow_up),
        ],
    );
    let outcome2 = gateway.chat(&second).await?;
    let final_answer = outcome2.response.require_text()?.to_string();
    calls.push(CallRecord {
        purpose: CallPurpose::Final,
        usage: outcome2.response.usage,
    });
    Ok(AnswerTrace {
        question_ref: q.into(),
        kind: StrategyKind::SimpleBarag,
        baseline_answer: None,
        decision: Some(decision),
        retrieved: hits.is_some(),
        hits,
        final_answer,
        calls,
    })
}

/// Advanced BARAG: baseline answer, forced decision call, and — when the
/// model wants more information — retrieval plus a final call carrying the
/// prior exchange.
pub async fn answer_advanced_barag(
    gateway: &Gateway,
    cfg: &StrategyConfig,
    store: &VectorStore,
    q: &QAPair,
) -> Result<AnswerTrace, StrategyError> {
    let baseline_req = answer_request(
        cfg,
        vec![
            ChatMessage::system(ANSWER_SYSTEM_PROMPT),
            ChatMessage::user(&q.question),
        ],
    );
    let baseline = gateway.chat(&baseline_req).await?;
    let baseline_answer = baseline.response.require_text()?.to_string();
    let mut calls = vec![CallRecord {
        purpose: CallPurpose::Baseline,
        usage: baseline.response.usage,
    }];

    let decision_req = answer_request(
        cfg,
        vec![
            ChatMessage::system(ANSWER_SYSTEM_PROMPT),
            ChatMessage::user(&q.question),
            ChatMessage::assistant(&baseline_answer),
        ],
    )
    .with_tools(vec![decision_tool()])
    .forcing_tool(DECISION_TOOL_NAME);
    let decision_outcome = gateway.chat(&decision_req).await?;
    let decision = decision_outcome
        .response
        .tool_call
        .as_ref()
        .expect("validated forced call has a tool_call")
        .bool_arg(DECISION_PARAM)
        .expect("validated boolean argument");
    calls.push(CallRecord {
        purpose: CallPurpose::Decision,
        usage: decision_outcome.response.usage,
    });

    if !decision {
        let trace = AnswerTrace {
            question_ref: q.into(),
            kind: StrategyKind::AdvancedBarag,
            baseline_answer: Some(baseline_answer.clone()),
            decision: Some(false),
            retrieved: false,
            hits: None,
            final_answer: baseline_answer,
            calls,
        };
        return Ok(trace);
    }

    // Retrieval uses the embedded user question, mirroring the simple setup.
    let query = gateway.embed_one(&cfg.embed_model, &q.question).await?;
    let hits = store.top_k(&query, cfg.k)?;
    let context = render_context(store, &hits);
    let final_req = answer_request(
        cfg,
        vec![
            ChatMessage::system(ANSWER_SYSTEM_PROMPT),
            ChatMessage::user(&q.question),
            ChatMessage::assistant(&baseline_answer),
            ChatMessage::user(format!(
                "You indicated that more information would improve your answer. Additional \
information retrieved from the database:\n\n{}\n\nAnswer the original question again, using \
this information.",
                context.rendered
            )),
        ],
    );
    let final_outcome = gateway.chat(&final_req).await?;
    let final_answer = final_outcome.response.require_text()?.to_string();
    calls.push(CallRecord {
        purpose: CallPurpose::Final,
        usage: final_outcome.response.usage,
    });
    Ok(AnswerTrace {
        question_ref: q.into(),
        kind: StrategyKind::AdvancedBarag,
        baseline_answer: Some(baseline_answer),
        decision: Some(true),
        retrieved: true,
        hits: Some(context.hits),
        final_answer,
        calls,
    })
}

/// Runs one strategy over a whole dataset with bounded parallelism, keeping
/// dataset order. Per-question failures are logged and skipped so long runs
/// complete.
pub async fn run_strategy(
    gateway: &Gateway,
    cfg: &StrategyConfig,
    kind: StrategyKind,
    pairs: &[QAPair],
    store: Option<&VectorStore>,
) -> Result<Vec<AnswerTrace>, StrategyError> {
    let results = stream::iter(pairs.iter().map(|q| async move {
        match (kind, store) {
            (StrategyKind::NoRag, _) => answer_norag(gateway, cfg, q).await,
            (StrategyKind::NaiveRag, Some(store)) => answer_naive(gateway, cfg, store, q).await,
            (StrategyKind::SimpleBarag, Some(store)) => {
                answer_simple_barag(gateway, cfg, store, q).await
            }
            (StrategyKind::AdvancedBarag, Some(store)) => {
                answer_advanced_barag(gateway, cfg, store, q).await
            }
            (kind, None) => Err(StrategyError::Io(format!(
                "strategy {kind} requires a vector store"
            ))),
        }
    }))
    .buffered(cfg.concurrency.max(1))
    .collect::<Vec<_>>()
    .await;

    let mut traces = Vec::new();
    for (pair, result) in pairs.iter().zip(results) {
        match result {
            Ok(trace) => {
                debug_assert!(
                    trace.check_invariants().is_ok(),
                    "strategy produced invalid trace"
                );
                traces.push(trace);
            }
            Err(StrategyError::Io(msg)) => return Err(StrategyError::Io(msg)),
            Err(e) => {
                log::warn!("question for page {} failed: {e}; continuing", pair.page_id);
            }
        }
    }
    Ok(traces)
}

pub fn save_traces(traces: &[AnswerTrace], path: impl AsRef<Path>) -> Result<(), StrategyError> {
    let path = path.as_ref();
    let mut file = File::create(path)
        .map_err(|e| StrategyError::Io(format!("cannot write {}: {e}", path.display())))?;
    for trace in traces {
        let line = serde_json::to_string(trace).map_err(|e| StrategyError::Io(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| StrategyError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn load_traces(path: impl AsRef<Path>) -> Result<Vec<AnswerTrace>, StrategyError> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| StrategyError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut traces = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| StrategyError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let trace: AnswerTrace = serde_json::from_str(&line).map_err(|e| {
            StrategyError::Io(format!(
                "bad trace line {} in {}: {e}",
                lineno + 1,
                path.display()
            ))
        })?;
        traces.push(trace);
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunk::ChunkingConfig;
    use crate::dataset::DatasetTag;
    use crate::gateway::mock::{seeded_embedding, ScriptedBackend};
    use crate::gateway::RetryPolicy;
    use crate::store::ChunkRecord;
    use serde_json::json;
    use std::sync::Arc;

    fn pair(question: &str) -> QAPair {
        QAPair {
            question: question.into(),
            page_id: 1,
            dataset_tag: DatasetTag::Filtered,
            gen_temperature: 1.2,
        }
    }

    fn toy_store(n: usize) -> VectorStore {
        let records = (0..n)
            .map(|i| ChunkRecord {
                chunk_id: i as u64,
                page_id: i as u64,
                title: format!("Title {i}"),
                body: format!("Body {i}"),
                stored_text: format!("Title {i}\nBody {i}"),
                vector: seeded_embedding(&format!("chunk {i}"), 8),
            })
            .collect();
        VectorStore {
            records,
            dim: 8,
            config: ChunkingConfig::default(),
            embed_model: "mock".into(),
        }
    }

    fn gw(backend: Arc<ScriptedBackend>) -> Gateway {
        Gateway::new(backend).with_retry(RetryPolicy::fast())
    }

    #[tokio::test]
    async fn norag_is_one_call_no_retrieval() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_text("I don't know", TokenUsage::new(40, 10));
        let gateway = gw(backend);
        let trace = answer_norag(&gateway, &StrategyConfig::default(), &pair("Who?"))
            .await
            .unwrap();
        assert_eq!(trace.final_answer, "I don't know");
        assert_eq!(trace.calls.len(), 1);
        assert!(!trace.retrieved);
        assert_eq!(trace.total_usage(), TokenUsage::new(40, 10));
        trace.check_invariants().unwrap();
    }

    #[tokio::test]
    async fn naive_rag_injects_all_hits_when_k_exceeds_store() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_embeddings(vec![seeded_embedding("Who?", 8)], 2);
        backend.push_text("answer", TokenUsage::new(100, 20));
        let gateway = gw(backend.clone());
        let store = toy_store(3);
        let cfg = StrategyConfig {
            k: 5,
            ..StrategyConfig::default()
        };
        let trace = answer_naive(&gateway, &cfg, &store, &pair("Who?"))
            .await
            .unwrap();
        assert!(trace.retrieved);
        assert_eq!(trace.hits.as_ref().unwrap().len(), 3);
        trace.check_invariants().unwrap();
        // Rendered context (every stored_text) appears in the outgoing prompt.
        let sent = backend.chat_requests.lock().unwrap();
        let prompt = &sent[0].messages.last().unwrap().content;
        for i in 0..3 {
            assert!(prompt.contains(&format!("Title {i}\nBody {i}")));
        }
    }

    #[tokio::test]
    async fn simple_barag_direct_answer_is_one_call() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_text("direct", TokenUsage::new(30, 5));
        let gateway = gw(backend);
        let store = toy_store(2);
        let trace =
            answer_simple_barag(&gateway, &StrategyConfig::default(), &store, &pair("Who?"))
                .await
                .unwrap();
        assert_eq!(trace.calls.len(), 1);
        assert!(!trace.retrieved);
        assert_eq!(trace.decision, None);
        assert_eq!(trace.final_answer, "direct");
    }

    #[tokio::test]
    async fn simple_barag_retrieves_on_true() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_tool_call(
            RETRIEVE_TOOL_NAME,
            json!({"retrieve": true}),
            TokenUsage::new(30, 3),
        );
        backend.push_embeddings(vec![seeded_embedding("Who?", 8)], 2);
        backend.push_text("with context", TokenUsage::new(200, 20));
        let gateway = gw(backend);
        let store = toy_store(2);
        let trace =
            answer_simple_barag(&gateway, &StrategyConfig::default(), &store, &pair("Who?"))
                .await
                .unwrap();
        assert_eq!(trace.calls.len(), 2);
        assert!(trace.retrieved);
        assert_eq!(trace.decision, Some(true));
        assert_eq!(trace.total_usage(), TokenUsage::new(230, 23));
    }

    #[tokio::test]
    async fn simple_barag_token_saving_variant_carries_admonition() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_text("direct", TokenUsage::new(30, 5));
        let gateway = gw(backend.clone());
        let store = toy_store(1);
        let cfg = StrategyConfig {
            variant: SimpleBaragVariant::TokenSaving,
            ..StrategyConfig::default()
        };
        answer_simple_barag(&gateway, &cfg, &store, &pair("Who?"))
            .await
            .unwrap();
        let sent = backend.chat_requests.lock().unwrap();
        assert!(sent[0].messages[0]
            .content
            .contains(TOKEN_SAVING_ADMONITION));
        assert_eq!(
            TOKEN_SAVING_ADMONITION,
            "If it is at all possible to answer a question without querying the database you \
should do so in order to save tokens"
        );
    }

    #[tokio::test]
    async fn simple_barag_self_aware_variant_replaces_system_prompt() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_text("direct", TokenUsage::new(30, 5));
        let gateway = gw(backend.clone());
        let store = toy_store(1);
        let cfg = StrategyConfig {
            variant: SimpleBaragVariant::SelfAware,
            ..StrategyConfig::default()
        };
        answer_simple_barag(&gateway, &cfg, &store, &pair("Who?"))
            .await
            .unwrap();
        let sent = backend.chat_requests.lock().unwrap();
        assert!(sent[0].messages[0].content.starts_with(
            "You are a knowledgeable AI that has been trained on large parts of the internet."
        ));
        // The first call always offers (never forces) the retrieve tool.
        assert_eq!(sent[0].tools.len(), 1);
        assert!(sent[0].tool_choice.is_none());
    }

    #[tokio::test]
    async fn advanced_barag_short_circuits_on_false() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_text("baseline answer", TokenUsage::new(40, 12));
        backend.push_tool_call(
            DECISION_TOOL_NAME,
            json!({"need_more_information": false}),
            TokenUsage::new(50, 4),
        );
        let gateway = gw(backend);
        let store = toy_store(2);
        let trace =
            answer_advanced_barag(&gateway, &StrategyConfig::default(), &store, &pair("Who?"))
                .await
                .unwrap();
        assert_eq!(trace.calls.len(), 2);
        assert_eq!(trace.decision, Some(false));
        assert!(!trace.retrieved);
        assert_eq!(trace.final_answer, "baseline answer");
        assert_eq!(trace.baseline_answer.as_deref(), Some("baseline answer"));
        trace.check_invariants().unwrap();
    }

    #[tokio::test]
    async fn advanced_barag_retrieves_on_true() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_text("baseline answer", TokenUsage::new(40, 12));
        backend.push_tool_call(
            DECISION_TOOL_NAME,
            json!({"need_more_information": true}),
            TokenUsage::new(50, 4),
        );
        backend.push_embeddings(vec![seeded_embedding("Who?", 8)], 2);
        backend.push_text("improved answer", TokenUsage::new(300, 30));
        let gateway = gw(backend.clone());
        let store = toy_store(4);
        let cfg = StrategyConfig {
            k: 2,
            ..StrategyConfig::default()
        };
        let trace = answer_advanced_barag(&gateway, &cfg, &store, &pair("Who?"))
            .await
            .unwrap();
        assert_eq!(trace.calls.len(), 3);
        assert_eq!(trace.decision, Some(true));
        assert!(trace.retrieved);
        assert_eq!(trace.hits.as_ref().unwrap().len(), 2);
        assert_eq!(trace.final_answer, "improved answer");
        trace.check_invariants().unwrap();
        // Final call history carries the baseline answer and the decision note.
        let sent = backend.chat_requests.lock().unwrap();
        let last = &sent[2];
        assert!(last.messages.iter().any(|m| m.content == "baseline answer"));
        assert!(last
            .messages
            .last()
            .unwrap()
            .content
            .contains("more information would improve your answer"));
    }

    #[tokio::test]
    async fn decision_tool_description_is_pinned() {
        assert_eq!(
            DECISION_TOOL_DESCRIPTION,
            "Set to true if you could have answered the last question better with more information"
        );
        let tool = decision_tool();
        assert_eq!(tool.params().len(), 1);
        assert_eq!(tool.params()[0].name, DECISION_PARAM);
    }

    #[tokio::test]
    async fn run_strategy_skips_failed_questions() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_text("answer one", TokenUsage::new(10, 2));
        // Second question: scripted backend runs dry -> fixture error, skipped.
        let gateway = gw(backend);
        let pairs = vec![pair("first?"), pair("second?")];
        let cfg = StrategyConfig {
            concurrency: 1,
            ..StrategyConfig::default()
        };
        let traces = run_strategy(&gateway, &cfg, StrategyKind::NoRag, &pairs, None)
            .await
            .unwrap();
        assert_eq!(traces.len(), 1);
        assert_eq!(traces[0].final_answer, "answer one");
    }

    #[test]
    fn traces_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.no-rag.A_f.jsonl");
        let traces = vec![AnswerTrace {
            question_ref: QuestionRef {
                page_id: 1,
                question: "Q?".into(),
            },
            kind: StrategyKind::NoRag,
            baseline_answer: None,
            decision: None,
            retrieved: false,
            hits: None,
            final_answer: "A".into(),
            calls: vec![CallRecord {
                purpose: CallPurpose::Final,
                usage: TokenUsage::new(1, 1),
            }],
        }];
        save_traces(&traces, &path).unwrap();
        assert_eq!(load_traces(&path).unwrap(), traces);
    }
}
