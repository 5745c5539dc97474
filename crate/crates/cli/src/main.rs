//! ragforge command line: dataset synthesis, RAG strategy runs, judging and
//! reporting over an OpenAI-compatible endpoint, with record/replay modes.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use ragforge_core::dataset::DatasetTag;
use ragforge_core::gateway::mock::SeededMockBackend;
use ragforge_core::gateway::Backend;
use ragforge_core::pipeline::{run_pipeline, Mode, PipelineConfig, PipelineError, Stage};
use ragforge_core::strategy::{SimpleBaragVariant, StrategyKind};
use ragforge_core::wiki::CutoffMonth;

#[derive(Parser)]
#[command(name = "ragforge", version, about = "RAG evaluation workbench")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Artifact directory
    #[arg(long, global = true, default_value = ".")]
    dir: PathBuf,

    /// Config file (TOML); flags override env, env overrides the file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// live, record or replay
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Transcript path (required for replay, written in record mode)
    #[arg(long, global = true)]
    transcript: Option<PathBuf>,

    /// Knowledge cutoff month, e.g. 2021-09
    #[arg(long, global = true)]
    cutoff: Option<String>,

    /// Bounded parallelism for LLM calls
    #[arg(long, global = true)]
    concurrency: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch random Wikipedia articles into corpus.jsonl
    Ingest {
        /// How many articles to fetch
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Canned page list (JSON) instead of the live MediaWiki API
        #[arg(long)]
        fixture: Option<PathBuf>,
        /// Permutation seed for the fixture source
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dataset operations
    Dataset {
        #[command(subcommand)]
        action: DatasetAction,
    },
    /// Vector store operations
    Store {
        #[command(subcommand)]
        action: StoreAction,
    },
    /// Answer a dataset with one or more strategies
    Run {
        /// no-rag, naive-rag, simple-barag, advanced-barag or all
        #[arg(long, default_value = "all")]
        strategy: String,
        /// Dataset file (defaults to dataset.<tag>.jsonl in --dir)
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Store file (defaults to store.jsonl in --dir)
        #[arg(long)]
        store: Option<PathBuf>,
        /// Retrieval depth
        #[arg(long)]
        k: Option<usize>,
        /// Dataset tag the run file is named after
        #[arg(long, default_value = "A_f")]
        tag: String,
        /// Simple BARAG prompt variant: plain, token-saving, self-aware
        #[arg(long)]
        variant: Option<String>,
    },
    /// Judge recorded runs against ground-truth articles
    Judge {
        #[arg(long, default_value = "all")]
        strategy: String,
        #[arg(long, default_value = "A_f")]
        tag: String,
    },
    /// Build reports, comparison tables and histograms
    Report {
        #[arg(long, default_value = "all")]
        strategy: String,
        #[arg(long, default_value = "A_f")]
        tag: String,
    },
    /// Run several stages in dependency order
    Pipeline {
        /// Comma-separated stage list, e.g. ingest,dataset,store,run,judge,report
        #[arg(long)]
        stages: String,
        #[arg(long, default_value = "all")]
        strategy: String,
        #[arg(long, default_value = "A_f")]
        tag: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DatasetAction {
    /// Classify and generate questions into dataset.<tag>.jsonl
    Build {
        /// A_r, A_d or A_f
        #[arg(long, default_value = "A_f")]
        tag: String,
        /// Corpus file (defaults to corpus.jsonl in --dir)
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Questions generated per article
        #[arg(long)]
        questions_per_article: Option<usize>,
    },
}

#[derive(Subcommand)]
enum StoreAction {
    /// Chunk, embed and seal the corpus into store.jsonl
    Build {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output store path (defaults to store.jsonl in --dir)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_strategies(raw: &str) -> Result<Vec<StrategyKind>, PipelineError> {
    if raw == "all" {
        return Ok(StrategyKind::ALL.to_vec());
    }
    raw.split(',')
        .map(|s| {
            StrategyKind::parse(s.trim())
                .ok_or_else(|| PipelineError::Config(format!("unknown strategy '{s}'")))
        })
        .collect()
}

fn parse_tag(raw: &str) -> Result<DatasetTag, PipelineError> {
    DatasetTag::parse(raw)
        .ok_or_else(|| PipelineError::Config(format!("unknown dataset tag '{raw}'")))
}

/// Builds the layered config: defaults < file < env < flags.
fn build_config(common: &CommonArgs) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig {
        dir: common.dir.clone(),
        ..PipelineConfig::default()
    };
    let config_file = common.config.clone().or_else(|| {
        let default = common.dir.join("ragforge.toml");
        default.exists().then_some(default)
    });
    if let Some(path) = config_file {
        cfg.apply_toml_file(&path)?;
    }
    cfg.apply_env()?;
    if let Some(mode) = &common.mode {
        cfg.mode = Mode::parse(mode)
            .ok_or_else(|| PipelineError::Config(format!("unknown mode '{mode}'")))?;
    }
    if let Some(t) = &common.transcript {
        cfg.transcript = Some(t.clone());
    }
    if let Some(cutoff) = &common.cutoff {
        cfg.cutoff =
            CutoffMonth::parse(cutoff).map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    if let Some(c) = common.concurrency {
        cfg.concurrency = c;
    }
    Ok(cfg)
}

/// `RAGFORGE_MOCK=1` swaps the live endpoint for the deterministic seeded
/// mock, keeping live/record flows runnable offline.
fn backend_override() -> Option<Arc<dyn Backend>> {
    match std::env::var("RAGFORGE_MOCK").ok().as_deref() {
        Some("1") | Some("true") => {
            let dim = std::env::var("RAGFORGE_MOCK_DIM")
                .ok()
                .and_then(|d| d.parse().ok())
                .unwrap_or(16);
            Some(Arc::new(SeededMockBackend::new(dim)))
        }
        _ => None,
    }
}

/// Makes an artifact supplied by path available under its conventional name
/// inside the artifact directory.
fn link_into_dir(
    cfg: &PipelineConfig,
    source: &std::path::Path,
    name: &str,
) -> Result<(), PipelineError> {
    let target = cfg.dir.join(name);
    if target.exists() && same_file(source, &target) {
        return Ok(());
    }
    std::fs::create_dir_all(&cfg.dir)
        .map_err(|e| PipelineError::Config(format!("cannot create {}: {e}", cfg.dir.display())))?;
    std::fs::copy(source, &target).map_err(|e| {
        PipelineError::Config(format!(
            "cannot copy {} to {}: {e}",
            source.display(),
            target.display()
        ))
    })?;
    Ok(())
}

fn same_file(a: &std::path::Path, b: &std::path::Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

async fn execute(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = build_config(&cli.common)?;
    let stages: Vec<Stage> = match &cli.command {
        Command::Ingest { n, fixture, seed } => {
            cfg.n_articles = *n;
            cfg.wiki_fixture = fixture.clone();
            cfg.wiki_seed = *seed;
            vec![Stage::Ingest]
        }
        Command::Dataset { action } => match action {
            DatasetAction::Build {
                tag,
                corpus,
                questions_per_article,
            } => {
                cfg.dataset_tag = parse_tag(tag)?;
                if let Some(corpus) = corpus {
                    link_into_dir(&cfg, corpus, "corpus.jsonl")?;
                }
                if let Some(q) = questions_per_article {
                    cfg.questions_per_article = *q;
                }
                vec![Stage::Dataset]
            }
        },
        Command::Store { action } => match action {
            StoreAction::Build { corpus, out } => {
                if let Some(corpus) = corpus {
                    link_into_dir(&cfg, corpus, "corpus.jsonl")?;
                }
                if let Some(out) = out {
                    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                        cfg.dir = parent.to_path_buf();
                    }
                }
                vec![Stage::Store]
            }
        },
        Command::Run {
            strategy,
            dataset,
            store,
            k,
            tag,
            variant,
        } => {
            cfg.strategies = parse_strategies(strategy)?;
            cfg.dataset_tag = parse_tag(tag)?;
            if let Some(k) = k {
                cfg.k = *k;
            }
            if let Some(v) = variant {
                cfg.simple_barag_variant = SimpleBaragVariant::parse(v)
                    .ok_or_else(|| PipelineError::Config(format!("unknown variant '{v}'")))?;
            }
            if let Some(dataset) = dataset {
                let name = format!("dataset.{}.jsonl", cfg.dataset_tag);
                link_into_dir(&cfg, dataset, &name)?;
            }
            if let Some(store) = store {
                link_into_dir(&cfg, store, "store.jsonl")?;
                let meta = store.with_file_name("store.meta.json");
                if meta.exists() {
                    link_into_dir(&cfg, &meta, "store.meta.json")?;
                }
            }
            vec![Stage::Run]
        }
        Command::Judge { strategy, tag } => {
            cfg.strategies = parse_strategies(strategy)?;
            cfg.dataset_tag = parse_tag(tag)?;
            vec![Stage::Judge]
        }
        Command::Report { strategy, tag } => {
            cfg.strategies = parse_strategies(strategy)?;
            cfg.dataset_tag = parse_tag(tag)?;
            vec![Stage::Report]
        }
        Command::Pipeline {
            stages,
            strategy,
            tag,
            n,
            fixture,
        } => {
            cfg.strategies = parse_strategies(strategy)?;
            cfg.dataset_tag = parse_tag(tag)?;
            cfg.n_articles = *n;
            cfg.wiki_fixture = fixture.clone();
            stages
                .split(',')
                .map(|s| {
                    Stage::parse(s.trim())
                        .ok_or_else(|| PipelineError::Config(format!("unknown stage '{s}'")))
                })
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    run_pipeline(&cfg, &stages, backend_override()).await
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(PipelineError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
