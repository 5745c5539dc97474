//! End-to-end orchestration: ingest → dataset → store → run → judge → report,
//! with self-describing artifacts and a provenance digest embedded in every
//! stage output.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chunk::ChunkingConfig;
use crate::dataset::{
    build_dataset, load_dataset, save_dataset, verify_pairs_resolve, Dataset, DatasetBuildConfig,
    DatasetTag, CLASSIFY_SYSTEM_TEMPLATE, CLASSIFY_TOOL_DESCRIPTION, QUESTION_PROMPT_TEMPLATE,
};
use crate::gateway::{
    Backend, EmbedCache, Gateway, HttpBackend, ReplayBackend, TranscriptRecorder,
};
use crate::judge::{
    evaluate, load_scores, save_scores, summarize, EvalScore, JudgeConfig, JUDGE_SYSTEM_PROMPT,
    SCORE_TOOL_DESCRIPTION,
};
use crate::report::{build_report, comparison_csv, comparison_text, emit_histogram, RunReport};
use crate::store::{build_store, VectorStore};
use crate::strategy::{
    load_traces, run_strategy, save_traces, SimpleBaragVariant, StrategyConfig, StrategyKind,
    ANSWER_SYSTEM_PROMPT, DECISION_TOOL_DESCRIPTION, RETRIEVE_TOOL_DESCRIPTION,
};
use crate::wiki::{
    fetch_random, load_corpus, save_corpus, CutoffMonth, FixtureWiki, MediaWikiClient, WikiSource,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing upstream artifact: {0}")]
    Dependency(PathBuf),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    fn stage(stage: Stage, err: impl std::fmt::Display) -> Self {
        Self::Stage {
            stage,
            message: err.to_string(),
        }
    }
}

/// Pipeline stages in dependency order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Dataset,
    Store,
    Run,
    Judge,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Self::Ingest,
        Self::Dataset,
        Self::Store,
        Self::Run,
        Self::Judge,
        Self::Report,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ingest" => Some(Self::Ingest),
            "dataset" => Some(Self::Dataset),
            "store" => Some(Self::Store),
            "run" => Some(Self::Run),
            "judge" => Some(Self::Judge),
            "report" => Some(Self::Report),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ingest => "ingest",
            Self::Dataset => "dataset",
            Self::Store => "store",
            Self::Run => "run",
            Self::Judge => "judge",
            Self::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How LLM traffic is served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "live" => Some(Self::Live),
            "record" => Some(Self::Record),
            "replay" => Some(Self::Replay),
            _ => None,
        }
    }
}

/// Model identifiers per role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub answerer: String,
    pub classifier: String,
    pub judge: String,
    pub embedder: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            answerer: "gpt-4".into(),
            classifier: "gpt-4".into(),
            judge: "gpt-4".into(),
            embedder: "text-embedding-ada-002".into(),
        }
    }
}

/// Temperatures per role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureConfig {
    pub generation: f64,
    pub classification: f64,
    pub answering: f64,
    pub judging: f64,
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        Self {
            generation: 1.2,
            classification: 0.0,
            answering: 0.0,
            judging: 0.0,
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub dir: PathBuf,
    pub cutoff: CutoffMonth,
    pub models: ModelConfig,
    pub temperatures: TemperatureConfig,
    pub k: usize,
    pub chunking: ChunkingConfig,
    pub concurrency: usize,
    pub mode: Mode,
    pub transcript: Option<PathBuf>,
    pub dataset_tag: DatasetTag,
    pub strategies: Vec<StrategyKind>,
    pub simple_barag_variant: SimpleBaragVariant,
    pub n_articles: usize,
    pub questions_per_article: usize,
    pub date_filtered_prefix: usize,
    pub article_char_budget: usize,
    /// Canned wiki pages for offline ingest; live MediaWiki when unset.
    pub wiki_fixture: Option<PathBuf>,
    pub wiki_seed: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            cutoff: CutoffMonth {
                year: 2021,
                month: 9,
            },
            models: ModelConfig::default(),
            temperatures: TemperatureConfig::default(),
            k: 5,
            chunking: ChunkingConfig::default(),
            concurrency: 4,
            mode: Mode::Live,
            transcript: None,
            dataset_tag: DatasetTag::Filtered,
            strategies: StrategyKind::ALL.to_vec(),
            simple_barag_variant: SimpleBaragVariant::Plain,
            n_articles: 100,
            questions_per_article: 1,
            date_filtered_prefix: 300,
            article_char_budget: 24_000,
            wiki_fixture: None,
            wiki_seed: None,
        }
    }
}

/// Optional fields parsed from `ragforge.toml`.
#[derive(Debug, Default, Deserialize)]
struct FileConfig {
    cutoff: Option<String>,
    k: Option<usize>,
    concurrency: Option<usize>,
    mode: Option<String>,
    transcript: Option<PathBuf>,
    dataset_tag: Option<String>,
    strategies: Option<Vec<String>>,
    simple_barag_variant: Option<String>,
    n_articles: Option<usize>,
    questions_per_article: Option<usize>,
    date_filtered_prefix: Option<usize>,
    article_char_budget: Option<usize>,
    wiki_fixture: Option<PathBuf>,
    wiki_seed: Option<u64>,
    models: Option<ModelConfig>,
    temperatures: Option<TemperatureConfig>,
    chunking: Option<ChunkingConfig>,
}

impl PipelineConfig {
    /// Applies a TOML config file. File values override defaults; callers
    /// apply environment and CLI-flag layers afterwards, in that order.
    pub fn apply_toml_file(&mut self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: FileConfig = toml::from_str(&raw)
            .map_err(|e| PipelineError::Config(format!("bad config {}: {e}", path.display())))?;
        if let Some(cutoff) = file.cutoff {
            self.cutoff =
                CutoffMonth::parse(&cutoff).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if let Some(k) = file.k {
            self.k = k;
        }
        if let Some(c) = file.concurrency {
            self.concurrency = c;
        }
        if let Some(mode) = file.mode {
            self.mode = Mode::parse(&mode)
                .ok_or_else(|| PipelineError::Config(format!("unknown mode '{mode}'")))?;
        }
        if let Some(t) = file.transcript {
            self.transcript = Some(t);
        }
        if let Some(tag) = file.dataset_tag {
            self.dataset_tag = DatasetTag::parse(&tag)
                .ok_or_else(|| PipelineError::Config(format!("unknown dataset tag '{tag}'")))?;
        }
        if let Some(list) = file.strategies {
            self.strategies = parse_strategies(&list)?;
        }
        if let Some(v) = file.simple_barag_variant {
            self.simple_barag_variant = SimpleBaragVariant::parse(&v)
                .ok_or_else(|| PipelineError::Config(format!("unknown variant '{v}'")))?;
        }
        if let Some(n) = file.n_articles {
            self.n_articles = n;
        }
        if let Some(n) = file.questions_per_article {
            self.questions_per_article = n;
        }
        if let Some(n) = file.date_filtered_prefix {
            self.date_filtered_prefix = n;
        }
        if let Some(n) = file.article_char_budget {
            self.article_char_budget = n;
        }
        if let Some(p) = file.wiki_fixture {
            self.wiki_fixture = Some(p);
        }
        if let Some(s) = file.wiki_seed {
            self.wiki_seed = Some(s);
        }
        if let Some(models) = file.models {
            self.models = models;
        }
        if let Some(t) = file.temperatures {
            self.temperatures = t;
        }
        if let Some(c) = file.chunking {
            self.chunking = c;
        }
        Ok(())
    }

    /// Applies `RAGFORGE_*` environment overrides (between file and flags).
    /// Empty values count as unset.
    pub fn apply_env(&mut self) -> Result<(), PipelineError> {
        fn env_var(name: &str) -> Option<String> {
            std::env::var(name)
                .ok()
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
        }
        if let Some(mode) = env_var("RAGFORGE_MODE") {
            self.mode = Mode::parse(&mode)
                .ok_or_else(|| PipelineError::Config(format!("unknown RAGFORGE_MODE '{mode}'")))?;
        }
        if let Some(cutoff) = env_var("RAGFORGE_CUTOFF") {
            self.cutoff =
                CutoffMonth::parse(&cutoff).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if let Some(k) = env_var("RAGFORGE_K") {
            self.k = k
                .parse()
                .map_err(|_| PipelineError::Config(format!("bad RAGFORGE_K '{k}'")))?;
        }
        if let Some(c) = env_var("RAGFORGE_CONCURRENCY") {
            self.concurrency = c
                .parse()
                .map_err(|_| PipelineError::Config(format!("bad RAGFORGE_CONCURRENCY '{c}'")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k == 0 {
            return Err(PipelineError::Config("k must be >= 1".into()));
        }
        if self.concurrency == 0 {
            return Err(PipelineError::Config("concurrency must be >= 1".into()));
        }
        if self.mode == Mode::Replay && self.transcript.is_none() {
            return Err(PipelineError::Config(
                "replay mode requires a transcript path".into(),
            ));
        }
        self.chunking
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    // Artifact path conventions.
    pub fn corpus_path(&self) -> PathBuf {
        self.dir.join("corpus.jsonl")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dir.join(format!("dataset.{}.jsonl", self.dataset_tag))
    }

    pub fn store_path(&self) -> PathBuf {
        self.dir.join("store.jsonl")
    }

    pub fn embed_cache_path(&self) -> PathBuf {
        self.dir.join("embed-cache.jsonl")
    }

    pub fn run_path(&self, strategy: StrategyKind) -> PathBuf {
        self.dir
            .join(format!("run.{strategy}.{}.jsonl", self.dataset_tag))
    }

    pub fn eval_path(&self, strategy: StrategyKind) -> PathBuf {
        self.dir
            .join(format!("eval.{strategy}.{}.jsonl", self.dataset_tag))
    }

    pub fn summary_path(&self, strategy: StrategyKind) -> PathBuf {
        self.dir
            .join(format!("summary.{strategy}.{}.json", self.dataset_tag))
    }

    pub fn histogram_path(&self, strategy: StrategyKind, ext: &str) -> PathBuf {
        self.dir
            .join(format!("histogram.{strategy}.{}.{ext}", self.dataset_tag))
    }

    pub fn report_path(&self) -> PathBuf {
        self.dir.join("report.json")
    }

    pub fn table_path(&self, ext: &str) -> PathBuf {
        self.dir.join(format!("table.{ext}"))
    }

    pub fn transcript_path(&self) -> PathBuf {
        self.transcript
            .clone()
            .unwrap_or_else(|| self.dir.join("session.transcript.jsonl"))
    }

    /// Provenance block embedded in every artifact's metadata. Filesystem
    /// paths are excluded so identical runs in different directories produce
    /// identical artifacts.
    pub fn provenance(&self) -> Provenance {
        Provenance {
            cutoff: self.cutoff.to_string(),
            models: self.models.clone(),
            temperatures: self.temperatures.clone(),
            k: self.k,
            chunking: self.chunking.clone(),
            dataset_tag: self.dataset_tag,
            strategies: self.strategies.iter().map(|s| s.to_string()).collect(),
            simple_barag_variant: self.simple_barag_variant,
            questions_per_article: self.questions_per_article,
            date_filtered_prefix: self.date_filtered_prefix,
            article_char_budget: self.article_char_budget,
            prompts: PromptSet::current(),
        }
    }

    pub fn config_digest(&self) -> String {
        self.provenance().digest()
    }

    fn dataset_build_config(&self) -> DatasetBuildConfig {
        DatasetBuildConfig {
            classifier_model: self.models.classifier.clone(),
            generator_model: self.models.answerer.clone(),
            gen_temperature: self.temperatures.generation,
            classify_temperature: self.temperatures.classification,
            questions_per_article: self.questions_per_article,
            date_filtered_prefix: self.date_filtered_prefix,
            article_char_budget: self.article_char_budget,
            concurrency: self.concurrency,
        }
    }

    fn strategy_config(&self) -> StrategyConfig {
        StrategyConfig {
            answer_model: self.models.answerer.clone(),
            embed_model: self.models.embedder.clone(),
            answer_temperature: self.temperatures.answering,
            k: self.k,
            variant: self.simple_barag_variant,
            concurrency: self.concurrency,
        }
    }

    fn judge_config(&self) -> JudgeConfig {
        JudgeConfig {
            judge_model: self.models.judge.clone(),
            temperature: self.temperatures.judging,
            article_char_budget: self.article_char_budget,
        }
    }
}

fn parse_strategies(list: &[String]) -> Result<Vec<StrategyKind>, PipelineError> {
    if list.len() == 1 && list[0] == "all" {
        return Ok(StrategyKind::ALL.to_vec());
    }
    list.iter()
        .map(|s| {
            StrategyKind::parse(s)
                .ok_or_else(|| PipelineError::Config(format!("unknown strategy '{s}'")))
        })
        .collect()
}

/// Everything that determines run semantics, hashed into the config digest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub cutoff: String,
    pub models: ModelConfig,
    pub temperatures: TemperatureConfig,
    pub k: usize,
    pub chunking: ChunkingConfig,
    pub dataset_tag: DatasetTag,
    pub strategies: Vec<String>,
    pub simple_barag_variant: SimpleBaragVariant,
    pub questions_per_article: usize,
    pub date_filtered_prefix: usize,
    pub article_char_budget: usize,
    pub prompts: PromptSet,
}

impl Provenance {
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_value(self).expect("provenance serialization cannot fail");
        let bytes = serde_json::to_vec(&canonical).expect("value serialization cannot fail");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// The prompt texts a run used, versioned into artifact metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub question_template: String,
    pub classify_system_template: String,
    pub classify_tool_description: String,
    pub answer_system: String,
    pub retrieve_tool_description: String,
    pub decision_tool_description: String,
    pub judge_system: String,
    pub score_tool_description: String,
}

impl PromptSet {
    pub fn current() -> Self {
        Self {
            question_template: QUESTION_PROMPT_TEMPLATE.into(),
            classify_system_template: CLASSIFY_SYSTEM_TEMPLATE.into(),
            classify_tool_description: CLASSIFY_TOOL_DESCRIPTION.into(),
            answer_system: ANSWER_SYSTEM_PROMPT.into(),
            retrieve_tool_description: RETRIEVE_TOOL_DESCRIPTION.into(),
            decision_tool_description: DECISION_TOOL_DESCRIPTION.into(),
            judge_system: JUDGE_SYSTEM_PROMPT.into(),
            score_tool_description: SCORE_TOOL_DESCRIPTION.into(),
        }
    }
}

/// Stage metadata sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageMeta {
    pub stage: String,
    pub config_digest: String,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub extra: Option<serde_json::Value>,
}

fn write_meta(
    cfg: &PipelineConfig,
    stage: Stage,
    path: &Path,
    extra: Option<serde_json::Value>,
) -> Result<(), PipelineError> {
    let provenance = cfg.provenance();
    let meta = StageMeta {
        stage: stage.to_string(),
        config_digest: provenance.digest(),
        provenance,
        extra,
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| PipelineError::stage(stage, e))?;
    std::fs::write(path, json + "\n")
        .map_err(|e| PipelineError::stage(stage, format!("cannot write {}: {e}", path.display())))
}

fn meta_path(artifact: &Path) -> PathBuf {
    let name = artifact
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("artifact");
    let stem = name.strip_suffix(".jsonl").unwrap_or(name);
    artifact.with_file_name(format!("{stem}.meta.json"))
}

fn require(path: PathBuf) -> Result<PathBuf, PipelineError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::Dependency(path))
    }
}

/// Builds the gateway dictated by the mode. `backend_override` substitutes
/// the live endpoint (used by tests and offline mock runs); record mode wraps
/// whatever backend is active.
pub fn build_gateway(
    cfg: &PipelineConfig,
    backend_override: Option<Arc<dyn Backend>>,
) -> Result<Gateway, PipelineError> {
    let backend: Arc<dyn Backend> = match cfg.mode {
        Mode::Replay => {
            let path = cfg.transcript_path();
            if !path.exists() {
                return Err(PipelineError::Dependency(path));
            }
            Arc::new(ReplayBackend::load(&path).map_err(|e| PipelineError::Config(e.to_string()))?)
        }
        Mode::Live | Mode::Record => {
            backend_override.unwrap_or_else(|| Arc::new(HttpBackend::from_env()))
        }
    };
    let mut gateway = Gateway::new(backend).with_concurrency(cfg.concurrency);
    if cfg.mode == Mode::Record {
        let recorder = TranscriptRecorder::create(cfg.transcript_path())
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        gateway = gateway.with_recorder(recorder);
    }
    if cfg.embed_cache_path().exists() {
        if let Ok(cache) = EmbedCache::load(cfg.embed_cache_path()) {
            gateway = gateway.with_embed_cache(cache);
        }
    }
    Ok(gateway)
}

async fn stage_ingest(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let source: Box<dyn WikiSource> = match &cfg.wiki_fixture {
        Some(path) => {
            let fixture = FixtureWiki::load(require(path.clone())?)
                .map_err(|e| PipelineError::stage(Stage::Ingest, e))?;
            Box::new(match cfg.wiki_seed {
                Some(seed) => fixture.with_seed(seed),
                None => fixture,
            })
        }
        None => Box::new(MediaWikiClient::new(None)),
    };
    let outcome = fetch_random(source.as_ref(), cfg.n_articles, cfg.concurrency)
        .await
        .map_err(|e| PipelineError::stage(Stage::Ingest, e))?;
    log::info!(
        "fetched {} articles ({} duplicates dropped, {} skipped)",
        outcome.articles.len(),
        outcome.duplicates_dropped,
        outcome.skipped
    );
    save_corpus(&outcome.articles, cfg.corpus_path())
        .map_err(|e| PipelineError::stage(Stage::Ingest, e))?;
    write_meta(
        cfg,
        Stage::Ingest,
        &meta_path(&cfg.corpus_path()),
        Some(serde_json::json!({
            "n_fetched": outcome.articles.len(),
            "duplicates_dropped": outcome.duplicates_dropped,
            "skipped": outcome.skipped,
        })),
    )
}

async fn stage_dataset(cfg: &PipelineConfig, gateway: &Gateway) -> Result<(), PipelineError> {
    let corpus = load_corpus(require(cfg.corpus_path())?)
        .map_err(|e| PipelineError::stage(Stage::Dataset, e))?;
    let dataset = build_dataset(
        gateway,
        &cfg.dataset_build_config(),
        &corpus,
        cfg.dataset_tag,
        cfg.cutoff,
    )
    .await
    .map_err(|e| PipelineError::stage(Stage::Dataset, e))?;
    verify_pairs_resolve(&dataset, &corpus).map_err(|e| PipelineError::stage(Stage::Dataset, e))?;
    save_dataset(&dataset, cfg.dataset_path())
        .map_err(|e| PipelineError::stage(Stage::Dataset, e))?;
    write_meta(
        cfg,
        Stage::Dataset,
        &meta_path(&cfg.dataset_path()),
        Some(serde_json::json!({
            "stats": dataset.stats,
            "n_pairs": dataset.pairs.len(),
        })),
    )
}

async fn stage_store(cfg: &PipelineConfig, gateway: &Gateway) -> Result<(), PipelineError> {
    let corpus = load_corpus(require(cfg.corpus_path())?)
        .map_err(|e| PipelineError::stage(Stage::Store, e))?;
    let store = build_store(gateway, &cfg.models.embedder, &corpus, &cfg.chunking)
        .await
        .map_err(|e| PipelineError::stage(Stage::Store, e))?;
    store
        .save(cfg.store_path())
        .map_err(|e| PipelineError::stage(Stage::Store, e))?;
    gateway
        .save_embed_cache(cfg.embed_cache_path())
        .map_err(|e| PipelineError::stage(Stage::Store, e))?;
    Ok(())
}

fn load_store_if_needed(cfg: &PipelineConfig) -> Result<Option<VectorStore>, PipelineError> {
    let needs_store = cfg.strategies.iter().any(|s| *s != StrategyKind::NoRag);
    if !needs_store {
        return Ok(None);
    }
    let store = VectorStore::load(require(cfg.store_path())?)
        .map_err(|e| PipelineError::stage(Stage::Run, e))?;
    Ok(Some(store))
}

async fn stage_run(cfg: &PipelineConfig, gateway: &Gateway) -> Result<(), PipelineError> {
    let dataset: Dataset = load_dataset(require(cfg.dataset_path())?, cfg.dataset_tag)
        .map_err(|e| PipelineError::stage(Stage::Run, e))?;
    let store = load_store_if_needed(cfg)?;
    let strategy_cfg = cfg.strategy_config();
    for &kind in &cfg.strategies {
        let traces = run_strategy(gateway, &strategy_cfg, kind, &dataset.pairs, store.as_ref())
            .await
            .map_err(|e| PipelineError::stage(Stage::Run, e))?;
        for trace in &traces {
            if let Err(msg) = trace.check_invariants() {
                return Err(PipelineError::stage(Stage::Run, msg));
            }
        }
        save_traces(&traces, cfg.run_path(kind))
            .map_err(|e| PipelineError::stage(Stage::Run, e))?;
        write_meta(
            cfg,
            Stage::Run,
            &meta_path(&cfg.run_path(kind)),
            Some(serde_json::json!({
                "strategy": kind.to_string(),
                "n_traces": traces.len(),
                "n_questions": dataset.pairs.len(),
            })),
        )?;
    }
    gateway
        .save_embed_cache(cfg.embed_cache_path())
        .map_err(|e| PipelineError::stage(Stage::Run, e))?;
    Ok(())
}

async fn stage_judge(cfg: &PipelineConfig, gateway: &Gateway) -> Result<(), PipelineError> {
    let corpus = load_corpus(require(cfg.corpus_path())?)
        .map_err(|e| PipelineError::stage(Stage::Judge, e))?;
    let by_page: HashMap<u64, &crate::wiki::Article> =
        corpus.iter().map(|a| (a.page_id, a)).collect();
    let judge_cfg = cfg.judge_config();
    for &kind in &cfg.strategies {
        let traces = load_traces(require(cfg.run_path(kind))?)
            .map_err(|e| PipelineError::stage(Stage::Judge, e))?;
        let results = stream::iter(traces.iter().map(|trace| {
            let judge_cfg = &judge_cfg;
            let by_page = &by_page;
            async move {
                let Some(article) = by_page.get(&trace.question_ref.page_id) else {
                    return Err(PipelineError::stage(
                        Stage::Judge,
                        format!(
                            "trace references page {} missing from corpus",
                            trace.question_ref.page_id
                        ),
                    ));
                };
                evaluate(
                    gateway,
                    judge_cfg,
                    &trace.question_ref,
                    &trace.final_answer,
                    article,
                )
                .await
                .map_err(|e| PipelineError::stage(Stage::Judge, e))
            }
        }))
        .buffered(cfg.concurrency.max(1))
        .collect::<Vec<_>>()
        .await;

        let mut scores: Vec<EvalScore> = Vec::new();
        for result in results {
            match result {
                Ok(score) => scores.push(score),
                Err(e) => log::warn!("unscored item: {e}"),
            }
        }
        save_scores(&scores, cfg.eval_path(kind))
            .map_err(|e| PipelineError::stage(Stage::Judge, e))?;
        write_meta(
            cfg,
            Stage::Judge,
            &meta_path(&cfg.eval_path(kind)),
            Some(serde_json::json!({
                "strategy": kind.to_string(),
                "n_scored": scores.len(),
                "n_traces": traces.len(),
            })),
        )?;
        let summary = summarize(&scores).map_err(|e| PipelineError::stage(Stage::Judge, e))?;
        let json = serde_json::to_string_pretty(&summary)
            .map_err(|e| PipelineError::stage(Stage::Judge, e))?;
        std::fs::write(cfg.summary_path(kind), json + "\n")
            .map_err(|e| PipelineError::stage(Stage::Judge, e.to_string()))?;
        emit_histogram(
            &summary,
            cfg.histogram_path(kind, "json"),
            cfg.histogram_path(kind, "svg"),
        )
        .map_err(|e| PipelineError::stage(Stage::Judge, e))?;
    }
    Ok(())
}

/// The top-level report artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config_digest: String,
    pub provenance: Provenance,
    pub reports: Vec<RunReport>,
}

fn stage_report(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let mut reports = Vec::new();
    for &kind in &cfg.strategies {
        let traces = load_traces(require(cfg.run_path(kind))?)
            .map_err(|e| PipelineError::stage(Stage::Report, e))?;
        let scores = load_scores(require(cfg.eval_path(kind))?)
            .map_err(|e| PipelineError::stage(Stage::Report, e))?;
        let report = build_report(kind, cfg.dataset_tag, &traces, &scores)
            .map_err(|e| PipelineError::stage(Stage::Report, e))?;
        reports.push(report);
    }
    let provenance = cfg.provenance();
    let pipeline_report = PipelineReport {
        config_digest: provenance.digest(),
        provenance,
        reports: reports.clone(),
    };
    let json = serde_json::to_string_pretty(&pipeline_report)
        .map_err(|e| PipelineError::stage(Stage::Report, e))?;
    std::fs::write(cfg.report_path(), json + "\n")
        .map_err(|e| PipelineError::stage(Stage::Report, e.to_string()))?;
    std::fs::write(cfg.table_path("csv"), comparison_csv(&reports))
        .map_err(|e| PipelineError::stage(Stage::Report, e.to_string()))?;
    std::fs::write(cfg.table_path("txt"), comparison_text(&reports))
        .map_err(|e| PipelineError::stage(Stage::Report, e.to_string()))?;
    Ok(())
}

/// Runs the selected stages in dependency order.
pub async fn run_pipeline(
    cfg: &PipelineConfig,
    stages: &[Stage],
    backend_override: Option<Arc<dyn Backend>>,
) -> Result<(), PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.dir)
        .map_err(|e| PipelineError::Config(format!("cannot create {}: {e}", cfg.dir.display())))?;
    let mut ordered: Vec<Stage> = stages.to_vec();
    ordered.sort();
    ordered.dedup();

    let needs_gateway = ordered
        .iter()
        .any(|s| matches!(s, Stage::Dataset | Stage::Store | Stage::Run | Stage::Judge));
    let gateway = if needs_gateway {
        Some(build_gateway(cfg, backend_override)?)
    } else {
        None
    };

    for stage in ordered {
        log::info!("stage {stage} starting");
        match stage {
            Stage::Ingest => stage_ingest(cfg).await?,
            Stage::Dataset => stage_dataset(cfg, gateway.as_ref().expect("gateway built")).await?,
            Stage::Store => stage_store(cfg, gateway.as_ref().expect("gateway built")).await?,
            Stage::Run => stage_run(cfg, gateway.as_ref().expect("gateway built")).await?,
            Stage::Judge => stage_judge(cfg, gateway.as_ref().expect("gateway built")).await?,
            Stage::Report => stage_report(cfg)?,
        }
        log::info!("stage {stage} done");
    }
    Ok(())
}
