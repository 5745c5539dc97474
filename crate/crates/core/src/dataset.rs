//! Dataset construction: recency classification and question generation over
//! a fetched corpus, producing the A_r / A_d / A_f evaluation tiers.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError, ParamSpec, ToolSpec};
use crate::wiki::{filter_by_creation, take_prefix, Article, CorpusStats, CutoffMonth};

/// Question-generation user message. `{text}` is replaced by the article body.
pub const QUESTION_PROMPT_TEMPLATE: &str =
    "Generate a creative question about the contents of the following text: {text}.";

/// System prompt for the recency classifier. `{cutoff}` is replaced by the
/// cutoff description, e.g. "September 2021".
pub const CLASSIFY_SYSTEM_TEMPLATE: &str = "You classify Wikipedia articles by the recency of \
their content. The knowledge cutoff date is {cutoff}. Decide whether the majority of the \
article's information is about a topic that happened after that date. This may include politics \
or sports in that time period, but also newly released things such as software libraries. Report \
your decision through the provided function.";

/// Tool offered (forced) to the classifier.
pub const CLASSIFY_TOOL_NAME: &str = "set_recency";
pub const CLASSIFY_TOOL_DESCRIPTION: &str =
    "Set whether the majority of the article's information is about events after the cutoff date.";
pub const CLASSIFY_PARAM: &str = "recent";

/// Default temperatures: high for question variability, zero for stable
/// classification.
pub const DEFAULT_GENERATION_TEMPERATURE: f64 = 1.2;
pub const DEFAULT_CLASSIFY_TEMPERATURE: f64 = 0.0;

/// Character budget applied to article bodies sent to the classifier,
/// truncating from the end.
pub const DEFAULT_ARTICLE_CHAR_BUDGET: usize = 24_000;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("classification failed for page {page_id}: {source}")]
    Classification { page_id: u64, source: GatewayError },
    #[error("question generation failed for page {page_id}: {source}")]
    Generation { page_id: u64, source: GatewayError },
    #[error("all articles were filtered out; dataset would be empty")]
    EmptyDataset,
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// The three dataset tiers: raw random, date-filtered, recency-classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetTag {
    #[serde(rename = "A_r")]
    Random,
    #[serde(rename = "A_d")]
    DateFiltered,
    #[serde(rename = "A_f")]
    Filtered,
}

impl DatasetTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Random => "A_r",
            Self::DateFiltered => "A_d",
            Self::Filtered => "A_f",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "A_r" | "a_r" | "ar" => Some(Self::Random),
            "A_d" | "a_d" | "ad" => Some(Self::DateFiltered),
            "A_f" | "a_f" | "af" => Some(Self::Filtered),
            _ => None,
        }
    }
}

impl std::fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one recency classification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecencyVerdict {
    pub page_id: u64,
    pub recent: bool,
    pub raw_reply: String,
    pub retries: u32,
}

/// One generated question bound to its single source article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    pub page_id: u64,
    pub dataset_tag: DatasetTag,
    pub gen_temperature: f64,
}

/// A built dataset tier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub tag: DatasetTag,
    pub pairs: Vec<QAPair>,
    pub stats: CorpusStats,
}

/// Knobs for a dataset build.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetBuildConfig {
    pub classifier_model: String,
    pub generator_model: String,
    pub gen_temperature: f64,
    pub classify_temperature: f64,
    pub questions_per_article: usize,
    /// Prefix applied after date filtering for the A_d tier.
    pub date_filtered_prefix: usize,
    pub article_char_budget: usize,
    pub concurrency: usize,
}

impl Default for DatasetBuildConfig {
    fn default() -> Self {
        Self {
            classifier_model: "gpt-4".into(),
            generator_model: "gpt-4".into(),
            gen_temperature: DEFAULT_GENERATION_TEMPERATURE,
            classify_temperature: DEFAULT_CLASSIFY_TEMPERATURE,
            questions_per_article: 1,
            date_filtered_prefix: 300,
            article_char_budget: DEFAULT_ARTICLE_CHAR_BUDGET,
            concurrency: 4,
        }
    }
}

fn truncate_chars(text: &str, budget: usize) -> &str {
    match text.char_indices().nth(budget) {
        Some((byte_idx, _)) => &text[..byte_idx],
        None => text,
    }
}

fn classify_tool() -> ToolSpec {
    ToolSpec::new(
        CLASSIFY_TOOL_NAME,
        CLASSIFY_TOOL_DESCRIPTION,
        vec![ParamSpec::boolean(
            CLASSIFY_PARAM,
            "True if the majority of the article's information concerns events after the cutoff date.",
        )],
    )
    .expect("static tool spec is valid")
}

/// Asks the classifier model whether the article is mostly about
/// post-cutoff events, via a forced boolean tool call.
pub async fn classify_recency(
    gateway: &Gateway,
    cfg: &DatasetBuildConfig,
    article: &Article,
    cutoff_description: &str,
) -> Result<RecencyVerdict, DatasetError> {
    let system = CLASSIFY_SYSTEM_TEMPLATE.replace("{cutoff}", cutoff_description);
    let body = truncate_chars(&article.text, cfg.article_char_budget);
    let user = format!("Title: {}\n\n{}", article.title, body);
    let req = ChatRequest::new(
        &cfg.classifier_model,
        vec![ChatMessage::system(system), ChatMessage::user(user)],
    )
    .with_temperature(cfg.classify_temperature)
    .with_tools(vec![classify_tool()])
    .forcing_tool(CLASSIFY_TOOL_NAME);

    let outcome = gateway
        .chat(&req)
        .await
        .map_err(|source| DatasetError::Classification {
            page_id: article.page_id,
            source,
        })?;
    let call = outcome
        .response
        .tool_call
        .as_ref()
        .expect("validated forced call has a tool_call");
    let recent = call
        .bool_arg(CLASSIFY_PARAM)
        .expect("validated boolean argument");
    Ok(RecencyVerdict {
        page_id: article.page_id,
        recent,
        raw_reply: serde_json::Value::Object(call.arguments.clone()).to_string(),
        retries: outcome.retries,
    })
}

/// Generates one question about the article, sending exactly the question
/// template with the body substituted.
pub async fn generate_question(
    gateway: &Gateway,
    cfg: &DatasetBuildConfig,
    article: &Article,
    tag: DatasetTag,
) -> Result<QAPair, DatasetError> {
    let user = QUESTION_PROMPT_TEMPLATE.replace("{text}", &article.text);
    let req = ChatRequest::new(&cfg.generator_model, vec![ChatMessage::user(user)])
        .with_temperature(cfg.gen_temperature);

    // Empty replies get one fresh attempt before failing the article.
    let mut question = None;
    for _ in 0..2 {
        let outcome = gateway
            .chat(&req)
            .await
            .map_err(|source| DatasetError::Generation {
                page_id: article.page_id,
                source,
            })?;
        match outcome.response.text.as_deref().map(str::trim) {
            Some(text) if !text.is_empty() => {
                question = Some(text.to_string());
                break;
            }
            _ => log::warn!(
                "empty question reply for page {}; retrying once",
                article.page_id
            ),
        }
    }
    let question = question.ok_or_else(|| DatasetError::Generation {
        page_id: article.page_id,
        source: GatewayError::Protocol("empty question reply after retry".into()),
    })?;
    Ok(QAPair {
        question,
        page_id: article.page_id,
        dataset_tag: tag,
        gen_temperature: cfg.gen_temperature,
    })
}

/// Builds one dataset tier from a corpus.
///
/// A_r draws on the raw corpus, A_d on the date-filtered prefix, A_f on the
/// date-filtered articles that the classifier marks recent. Articles whose
/// classification permanently fails are excluded, keeping A_f conservative.
pub async fn build_dataset(
    gateway: &Gateway,
    cfg: &DatasetBuildConfig,
    corpus: &[Article],
    tag: DatasetTag,
    cutoff: CutoffMonth,
) -> Result<Dataset, DatasetError> {
    let mut stats = CorpusStats {
        n_r: corpus.len() as u64,
        n_d: None,
        n_f: None,
    };

    let selected: Vec<Article> = match tag {
        DatasetTag::Random => corpus.to_vec(),
        DatasetTag::DateFiltered => {
            let dated = filter_by_creation(corpus, cutoff);
            stats.n_d = Some(dated.len() as u64);
            take_prefix(&dated, cfg.date_filtered_prefix)
        }
        DatasetTag::Filtered => {
            let dated = filter_by_creation(corpus, cutoff);
            stats.n_d = Some(dated.len() as u64);
            let description = cutoff.describe();
            let verdicts = stream::iter(dated.iter().map(|article| {
                let description = description.clone();
                async move { classify_recency(gateway, cfg, article, &description).await }
            }))
            .buffered(cfg.concurrency.max(1))
            .collect::<Vec<_>>()
            .await;
            let mut recent = Vec::new();
            for (article, verdict) in dated.iter().zip(verdicts) {
                match verdict {
                    Ok(v) if v.recent => recent.push(article.clone()),
                    Ok(_) => {}
                    Err(e) => {
                        log::warn!("excluding page {} from A_f: {e}", article.page_id);
                    }
                }
            }
            stats.n_f = Some(recent.len() as u64);
            recent
        }
    };

    if selected.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }

    let mut jobs = Vec::new();
    for article in &selected {
        for _ in 0..cfg.questions_per_article.max(1) {
            jobs.push(article.clone());
        }
    }
    let pairs = stream::iter(
        jobs.iter()
            .map(|article| async move { generate_question(gateway, cfg, article, tag).await }),
    )
    .buffered(cfg.concurrency.max(1))
    .collect::<Vec<_>>()
    .await;

    let mut ok_pairs = Vec::new();
    for pair in pairs {
        match pair {
            Ok(p) => ok_pairs.push(p),
            Err(e) => log::warn!("dropping question: {e}"),
        }
    }
    if ok_pairs.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    Ok(Dataset {
        tag,
        pairs: ok_pairs,
        stats,
    })
}

/// Referential-integrity check: every pair must resolve to a corpus article.
pub fn verify_pairs_resolve(dataset: &Dataset, corpus: &[Article]) -> Result<(), DatasetError> {
    let pages: HashSet<u64> = corpus.iter().map(|a| a.page_id).collect();
    for pair in &dataset.pairs {
        if !pages.contains(&pair.page_id) {
            return Err(DatasetError::Io(format!(
                "question references page {} which is not in the corpus",
                pair.page_id
            )));
        }
    }
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut file = File::create(path)
        .map_err(|e| DatasetError::Io(format!("cannot write {}: {e}", path.display())))?;
    for pair in &dataset.pairs {
        let line = serde_json::to_string(pair).map_err(|e| DatasetError::Io(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| DatasetError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>, tag: DatasetTag) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| DatasetError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: QAPair = serde_json::from_str(&line).map_err(|e| {
            DatasetError::Io(format!(
                "bad dataset line {} in {}: {e}",
                lineno + 1,
                path.display()
            ))
        })?;
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    Ok(Dataset {
        tag,
        pairs,
        stats: CorpusStats::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::ScriptedBackend;
    use crate::gateway::{RetryPolicy, TokenUsage};
    use crate::wiki::test_article;
    use serde_json::json;
    use std::sync::Arc;

    fn gw(backend: Arc<ScriptedBackend>) -> Gateway {
        Gateway::new(backend).with_retry(RetryPolicy::fast())
    }

    #[tokio::test]
    async fn classify_passes_through_mock_verdict() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_tool_call(
            CLASSIFY_TOOL_NAME,
            json!({"recent": true}),
            TokenUsage::new(10, 2),
        );
        let gateway = gw(backend);
        let article = test_article(7, "2022-01-01T00:00:00Z");
        let verdict = classify_recency(
            &gateway,
            &DatasetBuildConfig::default(),
            &article,
            "September 2021",
        )
        .await
        .unwrap();
        assert!(verdict.recent);
        assert_eq!(verdict.retries, 0);
        assert_eq!(verdict.page_id, 7);
    }

    #[tokio::test]
    async fn classify_retries_malformed_arguments() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_tool_call(
            CLASSIFY_TOOL_NAME,
            json!({"recent": "yes"}),
            TokenUsage::new(10, 2),
        );
        backend.push_tool_call(
            CLASSIFY_TOOL_NAME,
            json!({"wrong": true}),
            TokenUsage::new(10, 2),
        );
        backend.push_tool_call(
            CLASSIFY_TOOL_NAME,
            json!({"recent": false}),
            TokenUsage::new(10, 2),
        );
        let gateway = gw(backend);
        let article = test_article(7, "2022-01-01T00:00:00Z");
        let verdict = classify_recency(
            &gateway,
            &DatasetBuildConfig::default(),
            &article,
            "September 2021",
        )
        .await
        .unwrap();
        assert!(!verdict.recent);
        assert_eq!(verdict.retries, 2);
    }

    #[tokio::test]
    async fn question_prompt_is_exactly_the_template() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_text("What is this about?", TokenUsage::new(20, 5));
        let gateway = gw(backend.clone());
        let mut article = test_article(3, "2022-01-01T00:00:00Z");
        article.text = "x".repeat(50);
        let pair = generate_question(
            &gateway,
            &DatasetBuildConfig::default(),
            &article,
            DatasetTag::Random,
        )
        .await
        .unwrap();
        assert_eq!(pair.question, "What is this about?");
        let sent = backend.chat_requests.lock().unwrap();
        let user = sent[0].messages.last().unwrap();
        let template_len = QUESTION_PROMPT_TEMPLATE.chars().count();
        assert_eq!(user.content.chars().count(), template_len - 6 + 50);
        assert!(user
            .content
            .starts_with("Generate a creative question about the contents"));
        assert_eq!(sent[0].temperature, DEFAULT_GENERATION_TEMPERATURE);
    }

    #[tokio::test]
    async fn empty_reply_retries_once_then_fails() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_text("", TokenUsage::new(20, 0));
        backend.push_text("", TokenUsage::new(20, 0));
        let gateway = gw(backend);
        let article = test_article(3, "2022-01-01T00:00:00Z");
        let err = generate_question(
            &gateway,
            &DatasetBuildConfig::default(),
            &article,
            DatasetTag::Random,
        )
        .await
        .unwrap_err();
        assert!(matches!(err, DatasetError::Generation { page_id: 3, .. }));
    }

    fn corpus_straddling_cutoff() -> Vec<Article> {
        // Pages 0..6 predate the cutoff, 6..10 postdate it.
        (0..10u64)
            .map(|i| {
                let stamp = if i < 6 {
                    "2021-05-01T00:00:00Z"
                } else {
                    "2021-12-01T00:00:00Z"
                };
                test_article(i, stamp)
            })
            .collect()
    }

    #[tokio::test]
    async fn a_r_dataset_covers_whole_corpus() {
        let backend = Arc::new(ScriptedBackend::new());
        for i in 0..3 {
            backend.push_text(format!("Q{i}?").as_str(), TokenUsage::new(10, 3));
        }
        let gateway = gw(backend);
        let corpus: Vec<Article> = (0..3)
            .map(|i| test_article(i, "2021-01-01T00:00:00Z"))
            .collect();
        let dataset = build_dataset(
            &gateway,
            &DatasetBuildConfig {
                concurrency: 1,
                ..DatasetBuildConfig::default()
            },
            &corpus,
            DatasetTag::Random,
            CutoffMonth::parse("2021-09").unwrap(),
        )
        .await
        .unwrap();
        assert_eq!(dataset.pairs.len(), 3);
        assert_eq!(
            dataset.stats,
            CorpusStats {
                n_r: 3,
                n_d: None,
                n_f: None
            }
        );
        verify_pairs_resolve(&dataset, &corpus).unwrap();
    }

    #[tokio::test]
    async fn a_d_dataset_applies_filter_then_prefix() {
        let backend = Arc::new(ScriptedBackend::new());
        for i in 0..3 {
            backend.push_text(format!("Q{i}?").as_str(), TokenUsage::new(10, 3));
        }
        let gateway = gw(backend);
        let corpus = corpus_straddling_cutoff();
        let cfg = DatasetBuildConfig {
            date_filtered_prefix: 3,
            concurrency: 1,
            ..DatasetBuildConfig::default()
        };
        let dataset = build_dataset(
            &gateway,
            &cfg,
            &corpus,
            DatasetTag::DateFiltered,
            CutoffMonth::parse("2021-09").unwrap(),
        )
        .await
        .unwrap();
        assert_eq!(dataset.pairs.len(), 3);
        assert_eq!(dataset.stats.n_d, Some(4));
        let pages: Vec<u64> = dataset.pairs.iter().map(|p| p.page_id).collect();
        assert_eq!(pages, vec![6, 7, 8]);
    }

    #[tokio::test]
    async fn a_f_dataset_classifies_and_subsets() {
        let backend = Arc::new(ScriptedBackend::new());
        // Four date-survivors classified: recent, recent, not recent, recent.
        for recent in [true, true, false, true] {
            backend.push_tool_call(
                CLASSIFY_TOOL_NAME,
                json!({ "recent": recent }),
                TokenUsage::new(10, 2),
            );
        }
        for i in 0..3 {
            backend.push_text(format!("Q{i}?").as_str(), TokenUsage::new(10, 3));
        }
        let gateway = gw(backend);
        let corpus = corpus_straddling_cutoff();
        let cfg = DatasetBuildConfig {
            concurrency: 1,
            ..DatasetBuildConfig::default()
        };
        let dataset = build_dataset(
            &gateway,
            &cfg,
            &corpus,
            DatasetTag::Filtered,
            CutoffMonth::parse("2021-09").unwrap(),
        )
        .await
        .unwrap();
        assert_eq!(
            dataset.stats,
            CorpusStats {
                n_r: 10,
                n_d: Some(4),
                n_f: Some(3)
            }
        );
        let pages: Vec<u64> = dataset.pairs.iter().map(|p| p.page_id).collect();
        assert_eq!(pages, vec![6, 7, 9]);
        // Subset chain: pages(A_f) ⊆ pages(date-filtered) ⊆ pages(corpus).
        let dated: Vec<u64> = filter_by_creation(&corpus, CutoffMonth::parse("2021-09").unwrap())
            .iter()
            .map(|a| a.page_id)
            .collect();
        assert!(pages.iter().all(|p| dated.contains(p)));
    }

    #[tokio::test]
    async fn empty_selection_is_an_error() {
        let backend = Arc::new(ScriptedBackend::new());
        let gateway = gw(backend);
        let corpus = vec![test_article(1, "2020-01-01T00:00:00Z")];
        let err = build_dataset(
            &gateway,
            &DatasetBuildConfig::default(),
            &corpus,
            DatasetTag::DateFiltered,
            CutoffMonth::parse("2021-09").unwrap(),
        )
        .await
        .unwrap_err();
        assert!(matches!(err, DatasetError::EmptyDataset));
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.A_r.jsonl");
        let dataset = Dataset {
            tag: DatasetTag::Random,
            pairs: vec![QAPair {
                question: "Q?".into(),
                page_id: 1,
                dataset_tag: DatasetTag::Random,
                gen_temperature: 1.2,
            }],
            stats: CorpusStats {
                n_r: 1,
                n_d: None,
                n_f: None,
            },
        };
        save_dataset(&dataset, &path).unwrap();
        let loaded = load_dataset(&path, DatasetTag::Random).unwrap();
        assert_eq!(loaded.pairs, dataset.pairs);
    }
}
