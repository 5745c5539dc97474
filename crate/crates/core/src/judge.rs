//! Automatic answer evaluation: truthfulness and relevance on a 1–5 scale,
//! scored through a forced tool call with the ground-truth article in view.
//!
//! The judge sees the question, the chatbot answer and the source article —
//! never the answering run's retrieval context. Scores are declared as
//! integers in the tool schema; out-of-range or non-integer replies are
//! re-prompted, never clamped.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError, ParamSpec, ToolSpec};
use crate::strategy::QuestionRef;
use crate::wiki::Article;

/// Judge system prompt.
pub const JUDGE_SYSTEM_PROMPT: &str = "Your task is to evaluate answers given by a chatbot. You \
are provided the user query, the chatbot generated answer and a wikipedia article that contains \
information about the true answer. Given this information generate two scores from 1 to 5, where \
5 is the best, for the chatbot generated answer, concerning relevance and truthfulness. Give a \
score of 1 for relevance if the answer is that the chatbot doesn't know.";

/// Scoring tool.
pub const SCORE_TOOL_NAME: &str = "set_answer_evaluation";
pub const SCORE_TOOL_DESCRIPTION: &str =
    "Set the answer evaluation for truthfulness and relevance.";
pub const TRUTHFULNESS_PARAM: &str = "truthfulness";
pub const RELEVANCE_PARAM: &str = "relevance";

/// Character budget for the article section of the judge prompt, truncated
/// from the end when exceeded.
pub const DEFAULT_JUDGE_ARTICLE_BUDGET: usize = 24_000;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judging failed for page {page_id}: {source}")]
    Evaluation { page_id: u64, source: GatewayError },
    #[error("cannot summarize an empty score list")]
    EmptySummary,
    #[error("io error: {0}")]
    Io(String),
}

/// Validated scores for one answered question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalScore {
    pub truthfulness: u8,
    pub relevance: u8,
    pub judge_model: String,
    pub question_ref: QuestionRef,
    pub retries: u32,
}

/// Aggregate over a score list: exact means plus the joint 5×5 histogram
/// indexed (truthfulness, relevance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub mean_truthfulness: f64,
    pub mean_relevance: f64,
    pub histogram: [[u64; 5]; 5],
    pub n: u64,
}

/// Judge settings.
#[derive(Debug, Clone)]
pub struct JudgeConfig {
    pub judge_model: String,
    pub temperature: f64,
    pub article_char_budget: usize,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            judge_model: "gpt-4".into(),
            temperature: 0.0,
            article_char_budget: DEFAULT_JUDGE_ARTICLE_BUDGET,
        }
    }
}

fn score_tool() -> ToolSpec {
    ToolSpec::new(
        SCORE_TOOL_NAME,
        SCORE_TOOL_DESCRIPTION,
        vec![
            ParamSpec::integer_range(
                TRUTHFULNESS_PARAM,
                "Truthfulness score from 1 to 5, where 5 is the best.",
                1,
                5,
            ),
            ParamSpec::integer_range(
                RELEVANCE_PARAM,
                "Relevance score from 1 to 5, where 5 is the best.",
                1,
                5,
            ),
        ],
    )
    .expect("static tool spec is valid")
}

fn truncate_chars(text: &str, budget: usize) -> &str {
    match text.char_indices().nth(budget) {
        Some((byte_idx, _)) => &text[..byte_idx],
        None => text,
    }
}

/// Builds the judge request for one (question, answer, article) triple.
/// Exposed for wire-format tests.
pub fn judge_request(
    cfg: &JudgeConfig,
    question: &str,
    answer: &str,
    article: &Article,
) -> ChatRequest {
    let body = truncate_chars(&article.text, cfg.article_char_budget);
    let user = format!(
        "Question:\n{question}\n\nAnswer:\n{answer}\n\nArticle ({title}):\n{body}",
        title = article.title
    );
    ChatRequest::new(
        &cfg.judge_model,
        vec![
            ChatMessage::system(JUDGE_SYSTEM_PROMPT),
            ChatMessage::user(user),
        ],
    )
    .with_temperature(cfg.temperature)
    .with_tools(vec![score_tool()])
    .forcing_tool(SCORE_TOOL_NAME)
}

/// Scores one answer against its ground-truth article.
pub async fn evaluate(
    gateway: &Gateway,
    cfg: &JudgeConfig,
    q: &QuestionRef,
    answer: &str,
    article: &Article,
) -> Result<EvalScore, JudgeError> {
    debug_assert_eq!(
        q.page_id, article.page_id,
        "article must be the question's ground truth"
    );
    let req = judge_request(cfg, &q.question, answer, article);
    let outcome = gateway
        .chat(&req)
        .await
        .map_err(|source| JudgeError::Evaluation {
            page_id: q.page_id,
            source,
        })?;
    let call = outcome
        .response
        .tool_call
        .as_ref()
        .expect("validated forced call has a tool_call");
    let truthfulness = call
        .int_arg(TRUTHFULNESS_PARAM)
        .expect("validated integer argument") as u8;
    let relevance = call
        .int_arg(RELEVANCE_PARAM)
        .expect("validated integer argument") as u8;
    Ok(EvalScore {
        truthfulness,
        relevance,
        judge_model: cfg.judge_model.clone(),
        question_ref: q.clone(),
        retries: outcome.retries,
    })
}

/// Exact means and the joint histogram over a non-empty score list.
pub fn summarize(scores: &[EvalScore]) -> Result<ScoreSummary, JudgeError> {
    if scores.is_empty() {
        return Err(JudgeError::EmptySummary);
    }
    let mut histogram = [[0u64; 5]; 5];
    let mut truth_sum = 0u64;
    let mut rel_sum = 0u64;
    for score in scores {
        debug_assert!((1..=5).contains(&score.truthfulness));
        debug_assert!((1..=5).contains(&score.relevance));
        histogram[(score.truthfulness - 1) as usize][(score.relevance - 1) as usize] += 1;
        truth_sum += score.truthfulness as u64;
        rel_sum += score.relevance as u64;
    }
    let n = scores.len() as u64;
    Ok(ScoreSummary {
        mean_truthfulness: truth_sum as f64 / n as f64,
        mean_relevance: rel_sum as f64 / n as f64,
        histogram,
        n,
    })
}

pub fn save_scores(scores: &[EvalScore], path: impl AsRef<Path>) -> Result<(), JudgeError> {
    let path = path.as_ref();
    let mut file = File::create(path)
        .map_err(|e| JudgeError::Io(format!("cannot write {}: {e}", path.display())))?;
    for score in scores {
        let line = serde_json::to_string(score).map_err(|e| JudgeError::Io(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| JudgeError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<Vec<EvalScore>, JudgeError> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| JudgeError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut scores = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| JudgeError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let score: EvalScore = serde_json::from_str(&line).map_err(|e| {
            JudgeError::Io(format!(
                "bad score line {} in {}: {e}",
                lineno + 1,
                path.display()
            ))
        })?;
        scores.push(score);
    }
    Ok(scores)
}
