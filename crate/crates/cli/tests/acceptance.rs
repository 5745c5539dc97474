//! Acceptance suite. One test per criterion; each prints a `[PASS]` line on
//! success. Everything runs offline against the bundled toy fixture except
//! the final live smoke test, which is gated behind `RAGFORGE_LIVE_SMOKE=1`.
//!
//! `regen_toy_fixture` (ignored by default) rebuilds the bundled fixture and
//! its goldens from the deterministic seeded mock:
//! `cargo test -p ragforge --test acceptance -- --ignored regen_toy_fixture`

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use ragforge_core::chunk::{recursive_chunk, ChunkingConfig};
use ragforge_core::dataset::{load_dataset, DatasetTag};
use ragforge_core::gateway::mock::{ScriptedBackend, SeededMockBackend};
use ragforge_core::gateway::{
    read_transcript, EmbeddingVector, Gateway, ReplayBackend, RetryPolicy, TokenUsage,
    TranscriptEntry, TranscriptRecorder,
};
use ragforge_core::judge::{evaluate, EvalScore, JudgeConfig, SCORE_TOOL_NAME};
use ragforge_core::pipeline::{run_pipeline, Mode, PipelineConfig, Stage};
use ragforge_core::report::build_report;
use ragforge_core::store::{cosine, ChunkRecord, VectorStore};
use ragforge_core::strategy::{
    load_traces, run_strategy, AnswerTrace, CallPurpose, CallRecord, QuestionRef, StrategyConfig,
    StrategyKind, DECISION_TOOL_NAME,
};
use ragforge_core::testkit::{brute_force_top_k, check_chunk_invariants};
use ragforge_core::wiki::{
    fetch_random, filter_by_creation, load_corpus, save_corpus, Article, CutoffMonth, FixtureWiki,
};

const TOY_EMBED_DIM: usize = 16;
const TOY_QUESTIONS: usize = 10;

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn toy_dir() -> PathBuf {
    fixtures_dir().join("toy")
}

fn golden_dir() -> PathBuf {
    toy_dir().join("golden")
}

fn toy_config(dir: &Path, mode: Mode, concurrency: usize) -> PipelineConfig {
    PipelineConfig {
        dir: dir.to_path_buf(),
        cutoff: CutoffMonth::parse("2021-09").unwrap(),
        concurrency,
        mode,
        transcript: Some(toy_dir().join("toy.transcript.jsonl")),
        dataset_tag: DatasetTag::Filtered,
        strategies: StrategyKind::ALL.to_vec(),
        n_articles: TOY_QUESTIONS,
        ..PipelineConfig::default()
    }
}

fn output_artifact_names() -> Vec<String> {
    let mut names = Vec::new();
    for kind in StrategyKind::ALL {
        names.push(format!("run.{kind}.A_f.jsonl"));
        names.push(format!("run.{kind}.A_f.meta.json"));
        names.push(format!("eval.{kind}.A_f.jsonl"));
        names.push(format!("eval.{kind}.A_f.meta.json"));
        names.push(format!("summary.{kind}.A_f.json"));
        names.push(format!("histogram.{kind}.A_f.json"));
        names.push(format!("histogram.{kind}.A_f.svg"));
    }
    names.extend(["report.json".into(), "table.csv".into(), "table.txt".into()]);
    names
}

fn input_artifact_names() -> [&'static str; 5] {
    [
        "corpus.jsonl",
        "dataset.A_f.jsonl",
        "store.jsonl",
        "store.meta.json",
        "embed-cache.jsonl",
    ]
}

fn copy_toy_inputs(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    for name in input_artifact_names() {
        std::fs::copy(toy_dir().join(name), dir.join(name))
            .unwrap_or_else(|e| panic!("missing toy input {name}: {e}"));
    }
}

async fn replay_stages(dir: &Path) {
    let cfg = toy_config(dir, Mode::Replay, 2);
    run_pipeline(&cfg, &[Stage::Run, Stage::Judge, Stage::Report], None)
        .await
        .unwrap();
}

// ---------------------------------------------------------------------------
// Fixture regeneration (ignored unless requested by name).
// ---------------------------------------------------------------------------

#[tokio::test]
#[ignore = "rebuilds the bundled toy fixture in place"]
async fn regen_toy_fixture() {
    let toy = toy_dir();
    let golden = golden_dir();
    std::fs::create_dir_all(&golden).unwrap();

    // Select ten candidate pages the deterministic mock classifies as recent,
    // so the A_f build keeps the whole toy corpus.
    let wiki = FixtureWiki::load(toy.join("pages.json")).unwrap();
    let all = fetch_random(&wiki, 64, 1).await.unwrap().articles;
    let probe_gateway = Gateway::new(Arc::new(SeededMockBackend::new(TOY_EMBED_DIM)));
    let mut selected = Vec::new();
    for article in &all {
        let verdict = ragforge_core::dataset::classify_recency(
            &probe_gateway,
            &ragforge_core::dataset::DatasetBuildConfig::default(),
            article,
            "September 2021",
        )
        .await
        .unwrap();
        if verdict.recent {
            selected.push(article.clone());
        }
        if selected.len() == TOY_QUESTIONS {
            break;
        }
    }
    println!(
        "candidate pool: {} of {} classified recent",
        selected.len(),
        all.len()
    );
    assert_eq!(
        selected.len(),
        TOY_QUESTIONS,
        "candidate pool must yield {TOY_QUESTIONS} recent-classified pages; adjust pages.json"
    );

    // Record the whole pipeline against the seeded mock in a scratch dir.
    let scratch = tempfile::tempdir().unwrap();
    let transcript = scratch.path().join("toy.transcript.jsonl");
    let mut cfg = toy_config(scratch.path(), Mode::Record, 1);
    cfg.transcript = Some(transcript.clone());
    save_corpus(&selected, cfg.corpus_path()).unwrap();
    run_pipeline(
        &cfg,
        &[
            Stage::Dataset,
            Stage::Store,
            Stage::Run,
            Stage::Judge,
            Stage::Report,
        ],
        Some(Arc::new(SeededMockBackend::new(TOY_EMBED_DIM))),
    )
    .await
    .unwrap();

    // The fixture must exercise both advanced-BARAG branches.
    let traces = load_traces(cfg.run_path(StrategyKind::AdvancedBarag)).unwrap();
    assert_eq!(traces.len(), TOY_QUESTIONS);
    assert!(
        traces.iter().any(|t| t.decision == Some(true)),
        "no decision=true trace"
    );
    assert!(
        traces.iter().any(|t| t.decision == Some(false)),
        "no decision=false trace"
    );
    let dataset = load_dataset(cfg.dataset_path(), DatasetTag::Filtered).unwrap();
    assert_eq!(dataset.pairs.len(), TOY_QUESTIONS);

    // Install inputs and transcript, then goldens.
    for name in input_artifact_names() {
        std::fs::copy(scratch.path().join(name), toy.join(name)).unwrap();
    }
    std::fs::copy(
        scratch.path().join("dataset.A_f.meta.json"),
        toy.join("dataset.A_f.meta.json"),
    )
    .unwrap();
    std::fs::copy(&transcript, toy.join("toy.transcript.jsonl")).unwrap();
    for name in output_artifact_names() {
        std::fs::copy(scratch.path().join(&name), golden.join(&name)).unwrap();
    }

    // Sanity: a replay pass over the freshly installed fixture reproduces
    // the goldens byte for byte.
    let check = tempfile::tempdir().unwrap();
    copy_toy_inputs(check.path());
    replay_stages(check.path()).await;
    for name in output_artifact_names() {
        let got = std::fs::read(check.path().join(&name)).unwrap();
        let want = std::fs::read(golden.join(&name)).unwrap();
        assert_eq!(got, want, "replay diverges from fresh golden {name}");
    }
    println!("[PASS] toy fixture regenerated: {TOY_QUESTIONS} questions, 4 strategies");
}

// ---------------------------------------------------------------------------
// Criterion 1: chunker property suite.
// ---------------------------------------------------------------------------

fn random_text(rng: &mut StdRng, max_len: usize) -> String {
    let target = rng.random_range(0..=max_len);
    let mode = rng.random_range(0..4u8);
    // One batched entropy draw; per-char RNG calls dominate runtime otherwise.
    // Sized for the worst per-char entropy consumption across modes.
    let mut entropy = vec![0u8; 3 * target + 64];
    rng.fill(&mut entropy[..]);
    let mut text = String::with_capacity(target + 8);
    let mut chars = 0usize;
    let mut i = 0usize;
    let mut next = || {
        i += 1;
        entropy[i - 1]
    };
    match mode {
        // Words, sentences and paragraphs.
        0 => {
            while chars < target {
                let word_len = (next() % 11 + 1) as usize;
                for _ in 0..word_len {
                    text.push((b'a' + next() % 26) as char);
                    chars += 1;
                }
                let sep = match next() % 12 {
                    0 => ". ",
                    1 => "\n",
                    2 => "\n\n",
                    _ => " ",
                };
                text.push_str(sep);
                chars += sep.len();
            }
        }
        // Mixed-plane unicode with occasional separators.
        1 => {
            let pool: Vec<char> = "日本語текстačéü🦀🌍βγδ中文字符עברית …—margin"
                .chars()
                .collect();
            while chars < target {
                text.push(pool[next() as usize % pool.len()]);
                chars += 1;
                if next() % 20 == 0 {
                    text.push_str(if next() % 2 == 0 { " " } else { "\n\n" });
                    chars += 2;
                }
            }
        }
        // No separators at all: forces the character-level fallback.
        2 => {
            for _ in 0..target {
                text.push((b'A' + next() % 26) as char);
            }
        }
        // Separator-heavy runs, salted so overlap windows stay distinct.
        _ => {
            while chars < target {
                match next() % 4 {
                    0 => {
                        text.push_str("\n\n\n\n");
                        chars += 4;
                    }
                    1 => {
                        text.push_str("....  ");
                        chars += 6;
                    }
                    2 => {
                        let word = format!("w{:02x}{:02x}", next(), next());
                        text.push_str(&word);
                        chars += word.len();
                    }
                    _ => {
                        text.push_str(" \n ");
                        chars += 3;
                    }
                }
            }
        }
    }
    text
}

fn random_config(rng: &mut StdRng) -> ChunkingConfig {
    let max_size = rng.random_range(16..2000);
    let max_overlap = rng.random_range(0..max_size.min(200));
    ChunkingConfig {
        max_size,
        max_overlap,
        ..ChunkingConfig::default()
    }
}

#[test]
fn acceptance_01_chunker_property_suite() {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(0xC0FFEE);
    let paper = ChunkingConfig::default();
    assert_eq!((paper.max_size, paper.max_overlap), (1024, 48));

    for case in 0..1000 {
        let text = random_text(&mut rng, 20_000);
        let chunks = recursive_chunk(&text, &paper);
        check_chunk_invariants(&text, &chunks, &paper)
            .unwrap_or_else(|e| panic!("case {case} violates invariants under 1024/48: {e}"));
    }
    for config_idx in 0..20 {
        let config = random_config(&mut rng);
        config.validate().unwrap();
        for case in 0..50 {
            let text = random_text(&mut rng, 8_000);
            let chunks = recursive_chunk(&text, &config);
            check_chunk_invariants(&text, &chunks, &config).unwrap_or_else(|e| {
                panic!("config {config_idx} case {case} ({config:?}) violates invariants: {e}")
            });
        }
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "chunker suite took {elapsed:?}, budget is 10s"
    );
    println!(
        "[PASS] chunker property suite: 1000 texts @ 1024/48 + 20 random configs in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: retrieval oracle equivalence.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_02_retrieval_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x7071);
    for store_idx in 0..200 {
        let n = rng.random_range(1..=100);
        let dim = rng.random_range(2..=64);
        let with_ties = store_idx % 4 == 0;
        let mut vectors: Vec<EmbeddingVector> = Vec::with_capacity(n);
        for i in 0..n {
            if with_ties && i > 0 && rng.random_bool(0.3) {
                let j = rng.random_range(0..i);
                vectors.push(vectors[j].clone());
                continue;
            }
            let values: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            vectors.push(EmbeddingVector::new(
                if values.iter().all(|v| v.abs() < 1e-9) {
                    vec![1.0; dim]
                } else {
                    values
                },
            ));
        }
        let records = vectors
            .into_iter()
            .enumerate()
            .map(|(i, vector)| ChunkRecord {
                chunk_id: i as u64,
                page_id: i as u64,
                title: String::new(),
                body: String::new(),
                stored_text: String::new(),
                vector,
            })
            .collect();
        let store = VectorStore {
            records,
            dim,
            config: ChunkingConfig::default(),
            embed_model: "mock".into(),
        };
        for query_idx in 0..50 {
            let query =
                EmbeddingVector::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());
            if query.is_zero() {
                continue;
            }
            let k = if query_idx % 5 == 0 {
                rng.random_range(1..=10)
            } else {
                5
            };
            let got = store.top_k(&query, k).unwrap();
            let want = brute_force_top_k(&store, &query, k);
            assert_eq!(
                got.iter().map(|h| h.chunk_id).collect::<Vec<_>>(),
                want.iter().map(|h| h.chunk_id).collect::<Vec<_>>(),
                "order mismatch: store {store_idx} query {query_idx}"
            );
            for (g, w) in got.iter().zip(&want) {
                assert!(
                    (g.similarity - w.similarity).abs() < 1e-9,
                    "similarity drift: store {store_idx} query {query_idx}"
                );
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "retrieval suite took {elapsed:?}, budget is 30s"
    );
    println!("[PASS] retrieval oracle equivalence: 200 stores x 50 queries in {elapsed:?}");
}

// ---------------------------------------------------------------------------
// Criterion 3: cosine unit checks.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_03_cosine_unit_checks() {
    let mut rng = StdRng::seed_from_u64(3);
    for _ in 0..100 {
        let dim = rng.random_range(1..=32);
        let v = EmbeddingVector::new(
            (0..dim)
                .map(|_| rng.random_range(-10.0..10.0) + 0.1)
                .collect(),
        );
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() <= 1e-12);
    }
    let orthogonal_pairs = [
        (vec![1.0, 0.0], vec![0.0, 1.0]),
        (vec![2.0, 0.0, 0.0], vec![0.0, 0.0, -3.5]),
        (vec![1.0, 1.0], vec![1.0, -1.0]),
    ];
    for (a, b) in orthogonal_pairs {
        let got = cosine(&EmbeddingVector::new(a), &EmbeddingVector::new(b)).unwrap();
        assert!(got.abs() <= 1e-12);
    }
    let hand = cosine(
        &EmbeddingVector::new(vec![1.0, 1.0]),
        &EmbeddingVector::new(vec![1.0, 0.0]),
    )
    .unwrap();
    assert!((hand - std::f64::consts::FRAC_1_SQRT_2).abs() <= 1e-12);
    println!("[PASS] cosine unit checks: self=1, orthogonal=0, hand value 1/sqrt(2)");
}

// ---------------------------------------------------------------------------
// Criterion 4: end-to-end replay determinism + table layout.
// ---------------------------------------------------------------------------

#[tokio::test]
async fn acceptance_04_e2e_replay_determinism() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    copy_toy_inputs(dir_a.path());
    copy_toy_inputs(dir_b.path());

    replay_stages(dir_a.path()).await;
    let first_pass: HashMap<String, Vec<u8>> = output_artifact_names()
        .into_iter()
        .map(|name| {
            let bytes = std::fs::read(dir_a.path().join(&name))
                .unwrap_or_else(|e| panic!("missing artifact {name}: {e}"));
            (name, bytes)
        })
        .collect();

    // Second full pass in a different directory, plus an overwrite pass in
    // the first directory: all three must agree with the goldens.
    replay_stages(dir_b.path()).await;
    replay_stages(dir_a.path()).await;
    for name in output_artifact_names() {
        let golden = std::fs::read(golden_dir().join(&name))
            .unwrap_or_else(|e| panic!("missing golden {name}: {e}"));
        assert_eq!(first_pass[&name], golden, "{name} differs from golden");
        let b = std::fs::read(dir_b.path().join(&name)).unwrap();
        assert_eq!(b, golden, "{name} differs across directories");
        let rewritten = std::fs::read(dir_a.path().join(&name)).unwrap();
        assert_eq!(rewritten, golden, "{name} changed on overwrite");
    }

    // The comparison table reproduces the published row layout.
    let table = std::fs::read_to_string(dir_a.path().join("table.txt")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("Metric"));
    for label in ["Baseline", "NRAG", "SBARAG", "BARAG"] {
        assert!(lines[0].contains(label), "missing column {label}");
    }
    let rows: Vec<&str> = lines[2..]
        .iter()
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert_eq!(
        rows,
        vec!["Truthfulness", "Relevance", "n_in", "n_out", "#retrieval"]
    );

    // Provenance completeness: every stage sidecar records the digest of the
    // config actually used, and re-hashing the embedded provenance agrees.
    let expected_digest = toy_config(dir_a.path(), Mode::Replay, 2).config_digest();
    for kind in StrategyKind::ALL {
        let meta: Value = serde_json::from_str(
            &std::fs::read_to_string(dir_a.path().join(format!("run.{kind}.A_f.meta.json")))
                .unwrap(),
        )
        .unwrap();
        assert_eq!(meta["config_digest"], json!(expected_digest));
        let provenance: ragforge_core::pipeline::Provenance =
            serde_json::from_value(meta["provenance"].clone()).unwrap();
        assert_eq!(
            provenance.digest(),
            expected_digest,
            "provenance re-hash mismatch"
        );
    }
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir_a.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["config_digest"], json!(expected_digest));
    println!("[PASS] e2e replay determinism: byte-identical artifacts across passes and dirs");
}

// ---------------------------------------------------------------------------
// Criterion 5: strategy call-count law.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_05_strategy_call_count_law() {
    let norag = load_traces(golden_dir().join("run.no-rag.A_f.jsonl")).unwrap();
    let naive = load_traces(golden_dir().join("run.naive-rag.A_f.jsonl")).unwrap();
    let advanced = load_traces(golden_dir().join("run.advanced-barag.A_f.jsonl")).unwrap();
    assert_eq!(norag.len(), TOY_QUESTIONS);
    assert_eq!(naive.len(), TOY_QUESTIONS);
    assert_eq!(advanced.len(), TOY_QUESTIONS);

    for trace in &norag {
        assert_eq!(trace.calls.len(), 1, "no-rag must make exactly one call");
        assert!(!trace.retrieved);
    }
    for trace in &naive {
        assert_eq!(trace.calls.len(), 1, "naive-rag must make exactly one call");
        assert!(trace.retrieved);
    }
    // Naive RAG retrieves for every question, the published 300/300, 256/256
    // pattern.
    assert_eq!(naive.iter().filter(|t| t.retrieved).count(), TOY_QUESTIONS);

    let mut seen_true = false;
    let mut seen_false = false;
    for trace in &advanced {
        match trace.decision {
            Some(true) => {
                seen_true = true;
                assert_eq!(trace.calls.len(), 3, "decision=true must mean three calls");
                assert!(trace.retrieved);
            }
            Some(false) => {
                seen_false = true;
                assert_eq!(trace.calls.len(), 2, "decision=false must mean two calls");
                assert!(!trace.retrieved);
            }
            None => panic!("advanced-barag trace without a decision"),
        }
        trace.check_invariants().unwrap();
    }
    assert!(
        seen_true && seen_false,
        "fixture must exercise both decision branches"
    );
    println!("[PASS] strategy call-count law: 1/1/2-or-3 calls, naive retrieval == questions");
}

// ---------------------------------------------------------------------------
// Criterion 6: token accounting closure.
// ---------------------------------------------------------------------------

#[tokio::test]
async fn acceptance_06_token_accounting_closure() {
    // Replay the strategy runs while re-recording them, then compare three
    // independent tallies: trace sums, fresh-transcript sums, session totals.
    let scratch = tempfile::tempdir().unwrap();
    let fresh_transcript = scratch.path().join("closure.transcript.jsonl");
    let gateway = Gateway::new(Arc::new(
        ReplayBackend::load(toy_dir().join("toy.transcript.jsonl")).unwrap(),
    ))
    .with_recorder(TranscriptRecorder::create(&fresh_transcript).unwrap());

    let dataset = load_dataset(toy_dir().join("dataset.A_f.jsonl"), DatasetTag::Filtered).unwrap();
    let store = VectorStore::load(toy_dir().join("store.jsonl")).unwrap();
    let cfg = StrategyConfig {
        concurrency: 1,
        ..StrategyConfig::default()
    };

    let mut trace_total = TokenUsage::default();
    let mut all_traces: Vec<(StrategyKind, Vec<AnswerTrace>)> = Vec::new();
    for kind in StrategyKind::ALL {
        let traces = run_strategy(&gateway, &cfg, kind, &dataset.pairs, Some(&store))
            .await
            .unwrap();
        assert_eq!(traces.len(), TOY_QUESTIONS);
        for trace in &traces {
            trace_total = trace_total + trace.total_usage();
        }
        all_traces.push((kind, traces));
    }

    let recorded = read_transcript(&fresh_transcript).unwrap();
    let mut transcript_total = TokenUsage::default();
    let mut context_requests = 0usize;
    for entry in &recorded {
        if let TranscriptEntry::Chat {
            request, response, ..
        } = entry
        {
            transcript_total = transcript_total + response.usage;
            if request
                .messages
                .iter()
                .any(|m| m.content.contains("[[source: "))
            {
                context_requests += 1;
            }
        }
    }
    assert_eq!(
        trace_total, transcript_total,
        "trace sums != transcript sums"
    );
    assert_eq!(
        gateway.session_usage(),
        transcript_total,
        "session accumulator disagrees"
    );

    // Retrieval consistency: each retrieved trace injects rendered context
    // into exactly one recorded request, and none of the others mention it.
    let retrieved_traces: usize = all_traces
        .iter()
        .flat_map(|(_, traces)| traces)
        .filter(|t| {
            assert_eq!(
                t.retrieved,
                t.hits.is_some(),
                "retrieved flag must match hits"
            );
            t.retrieved
        })
        .count();
    assert_eq!(
        context_requests, retrieved_traces,
        "context injections != retrievals"
    );

    // Report-level closure per strategy against its own traces.
    for (kind, traces) in &all_traces {
        let expected: TokenUsage = traces.iter().map(|t| t.total_usage()).sum();
        let report = build_report(*kind, DatasetTag::Filtered, traces, &[]).unwrap();
        assert_eq!(report.n_in, expected.input_tokens);
        assert_eq!(report.n_out, expected.output_tokens);
    }

    // The published single-example check: (100,20) + (50,5) -> (150,25).
    let mk = |page_id: u64, usage: TokenUsage, retrieved: bool| AnswerTrace {
        question_ref: QuestionRef {
            page_id,
            question: format!("q{page_id}"),
        },
        kind: StrategyKind::NaiveRag,
        baseline_answer: None,
        decision: None,
        retrieved,
        hits: retrieved.then(Vec::new),
        final_answer: "a".into(),
        calls: vec![CallRecord {
            purpose: CallPurpose::Final,
            usage,
        }],
    };
    let traces = vec![
        mk(1, TokenUsage::new(100, 20), true),
        mk(2, TokenUsage::new(50, 5), false),
    ];
    let report = build_report(StrategyKind::NaiveRag, DatasetTag::Random, &traces, &[]).unwrap();
    assert_eq!(
        (report.n_in, report.n_out, report.n_retrievals),
        (150, 25, 1)
    );
    println!("[PASS] token accounting closure: trace, transcript and session tallies agree");
}

// ---------------------------------------------------------------------------
// Criterion 7: judge robustness under fuzzed replies.
// ---------------------------------------------------------------------------

fn malformed_score_args(rng: &mut StdRng) -> Value {
    match rng.random_range(0..6u8) {
        0 => json!({ "truthfulness": rng.random_range(6..100) }),
        1 => json!({ "truthfulness": rng.random_range(1..=5) as f64 + 0.5, "relevance": 3 }),
        2 => json!({ "truthfulness": "five", "relevance": "three" }),
        3 => json!({ "relevance": rng.random_range(1..=5) }),
        4 => json!({ "truthfulness": 0, "relevance": rng.random_range(-20..=0) }),
        _ => json!({ "truthfulness": 3, "relevance": 3, "fluency": 3 }),
    }
}

#[tokio::test]
async fn acceptance_07_judge_robustness() {
    let article = Article {
        page_id: 1,
        title: "Probe".into(),
        text: "Probe article body.".into(),
        created_at: "2022-01-01T00:00:00Z".parse().unwrap(),
        url: "https://en.wikipedia.org/?curid=1".into(),
    };
    let q = QuestionRef {
        page_id: 1,
        question: "What is probed?".into(),
    };
    let judge_cfg = JudgeConfig::default();
    let mut rng = StdRng::seed_from_u64(77);

    let mut persisted: Vec<EvalScore> = Vec::new();
    for round in 0..200 {
        let backend = Arc::new(ScriptedBackend::new());
        if round % 7 == 0 {
            // Free text instead of any tool call, three times over.
            for _ in 0..3 {
                backend.push_text("I rate this a solid 4.", TokenUsage::new(10, 5));
            }
        } else {
            for _ in 0..3 {
                backend.push_tool_call(
                    SCORE_TOOL_NAME,
                    malformed_score_args(&mut rng),
                    TokenUsage::new(10, 5),
                );
            }
        }
        let gateway = Gateway::new(backend).with_retry(RetryPolicy::fast());
        if let Ok(score) = evaluate(&gateway, &judge_cfg, &q, "the answer", &article).await {
            persisted.push(score);
        }
    }
    assert!(
        persisted.is_empty(),
        "fuzzed judge replies must never persist a score: {persisted:?}"
    );

    // Scripted retry sequence {7,3} -> {7,3} -> {5,3} recovers with 2 retries.
    let backend = Arc::new(ScriptedBackend::new());
    for _ in 0..2 {
        backend.push_tool_call(
            SCORE_TOOL_NAME,
            json!({"truthfulness": 7, "relevance": 3}),
            TokenUsage::new(10, 5),
        );
    }
    backend.push_tool_call(
        SCORE_TOOL_NAME,
        json!({"truthfulness": 5, "relevance": 3}),
        TokenUsage::new(10, 5),
    );
    let gateway = Gateway::new(backend).with_retry(RetryPolicy::fast());
    let score = evaluate(&gateway, &judge_cfg, &q, "the answer", &article)
        .await
        .unwrap();
    assert_eq!(
        (score.truthfulness, score.relevance, score.retries),
        (5, 3, 2)
    );
    println!("[PASS] judge robustness: 200 fuzzed replies rejected, retry sequence yields (5,3)");
}

// ---------------------------------------------------------------------------
// Criterion 8: wire-format conformance against golden schemas.
// ---------------------------------------------------------------------------

fn validate_schema(instance: &Value, schema: &Value, path: &str) -> Result<(), String> {
    let obj = schema
        .as_object()
        .ok_or_else(|| format!("{path}: schema must be an object"))?;
    if let Some(expected) = obj.get("const") {
        if instance != expected {
            return Err(format!("{path}: expected const {expected}, got {instance}"));
        }
    }
    if let Some(options) = obj.get("enum").and_then(Value::as_array) {
        if !options.contains(instance) {
            return Err(format!("{path}: {instance} not in enum"));
        }
    }
    if let Some(ty) = obj.get("type").and_then(Value::as_str) {
        let ok = match ty {
            "object" => instance.is_object(),
            "array" => instance.is_array(),
            "string" => instance.is_string(),
            "number" => instance.is_number(),
            "integer" => instance.is_i64() || instance.is_u64(),
            "boolean" => instance.is_boolean(),
            "null" => instance.is_null(),
            other => return Err(format!("{path}: unsupported type '{other}'")),
        };
        if !ok {
            return Err(format!("{path}: expected {ty}"));
        }
    }
    if let Some(fields) = instance.as_object() {
        if let Some(required) = obj.get("required").and_then(Value::as_array) {
            for name in required.iter().filter_map(Value::as_str) {
                if !fields.contains_key(name) {
                    return Err(format!("{path}: missing required '{name}'"));
                }
            }
        }
        if let Some(min) = obj.get("minProperties").and_then(Value::as_u64) {
            if (fields.len() as u64) < min {
                return Err(format!("{path}: fewer than {min} properties"));
            }
        }
        if let Some(max) = obj.get("maxProperties").and_then(Value::as_u64) {
            if (fields.len() as u64) > max {
                return Err(format!("{path}: more than {max} properties"));
            }
        }
        let props = obj.get("properties").and_then(Value::as_object);
        for (key, value) in fields {
            let sub = format!("{path}/{key}");
            if let Some(prop_schema) = props.and_then(|p| p.get(key)) {
                validate_schema(value, prop_schema, &sub)?;
            } else {
                match obj.get("additionalProperties") {
                    Some(Value::Bool(false)) => {
                        return Err(format!("{path}: unexpected property '{key}'"))
                    }
                    Some(Value::Bool(true)) | None => {}
                    Some(extra_schema) => validate_schema(value, extra_schema, &sub)?,
                }
            }
        }
    }
    if let Some(items) = instance.as_array() {
        if let Some(min) = obj.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < min {
                return Err(format!("{path}: fewer than {min} items"));
            }
        }
        if let Some(max) = obj.get("maxItems").and_then(Value::as_u64) {
            if (items.len() as u64) > max {
                return Err(format!("{path}: more than {max} items"));
            }
        }
        if let Some(item_schema) = obj.get("items") {
            for (i, item) in items.iter().enumerate() {
                validate_schema(item, item_schema, &format!("{path}/{i}"))?;
            }
        }
    }
    Ok(())
}

#[test]
fn acceptance_08_wire_format_conformance() {
    let entries = read_transcript(toy_dir().join("toy.transcript.jsonl")).unwrap();
    let request_forcing = |tool: &str| -> Value {
        entries
            .iter()
            .find_map(|entry| match entry {
                TranscriptEntry::Chat { request, .. }
                    if request.tool_choice.as_ref().map(|c| c.name.as_str()) == Some(tool) =>
                {
                    Some(serde_json::to_value(request).unwrap())
                }
                _ => None,
            })
            .unwrap_or_else(|| panic!("transcript has no forced call to {tool}"))
    };

    let load_schema = |name: &str| -> Value {
        let path = fixtures_dir().join("schemas").join(name);
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap())
            .unwrap_or_else(|e| panic!("bad schema {name}: {e}"))
    };

    let boolean_request = request_forcing(DECISION_TOOL_NAME);
    validate_schema(
        &boolean_request,
        &load_schema("forced_boolean_call.schema.json"),
        "$",
    )
    .unwrap_or_else(|e| panic!("forced boolean call does not conform: {e}"));

    let scoring_request = request_forcing(SCORE_TOOL_NAME);
    validate_schema(
        &scoring_request,
        &load_schema("scoring_call.schema.json"),
        "$",
    )
    .unwrap_or_else(|e| panic!("scoring call does not conform: {e}"));

    // Negative control: the validator actually rejects.
    let mut broken = scoring_request.clone();
    broken["tools"][0]["function"]["parameters"]["properties"]["truthfulness"]["type"] =
        json!("number");
    assert!(validate_schema(&broken, &load_schema("scoring_call.schema.json"), "$").is_err());
    println!("[PASS] wire-format conformance: recorded requests match golden schemas");
}

// ---------------------------------------------------------------------------
// Judge isolation: scoring requests carry (question, answer, ground-truth
// article) and nothing from the answering run's retrieval context.
// ---------------------------------------------------------------------------

#[test]
fn invariant_judge_isolation_on_toy_transcript() {
    let corpus: HashMap<u64, Article> = load_corpus(toy_dir().join("corpus.jsonl"))
        .unwrap()
        .into_iter()
        .map(|a| (a.page_id, a))
        .collect();
    let entries = read_transcript(toy_dir().join("toy.transcript.jsonl")).unwrap();
    let mut judged = 0;
    for entry in entries {
        let TranscriptEntry::Chat { request, .. } = entry else {
            continue;
        };
        if request.tool_choice.as_ref().map(|c| c.name.as_str()) != Some(SCORE_TOOL_NAME) {
            continue;
        }
        judged += 1;
        assert_eq!(
            request.messages.len(),
            2,
            "judge sends system + one user message"
        );
        let user = &request.messages[1].content;
        let (before_answer, rest) = user
            .split_once("\n\nAnswer:\n")
            .expect("labeled answer section");
        assert!(before_answer.starts_with("Question:\n"));
        let (_, article_section) = rest
            .split_once("\n\nArticle (")
            .expect("labeled article section");
        let (_, article_body) = article_section.split_once("):\n").expect("article body");
        // The article section is a ground-truth corpus text, untouched by any
        // retrieval rendering.
        assert!(
            corpus
                .values()
                .any(|a| a.text.starts_with(article_body) || article_body.starts_with(&a.text)),
            "article section must come from the corpus"
        );
        assert!(
            !before_answer.contains("[[source: "),
            "question section contains context"
        );
        assert!(
            !article_body.contains("[[source: "),
            "article section contains context"
        );
    }
    assert_eq!(
        judged,
        4 * TOY_QUESTIONS,
        "every (strategy, question) pair gets judged once"
    );
    println!("[PASS] judge isolation: {judged} scoring requests carry only ground-truth inputs");
}

// ---------------------------------------------------------------------------
// Criterion 9: date-filter correctness at the cutoff boundary.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_09_date_filter_correctness() {
    let article = |page_id: u64, stamp: &str| Article {
        page_id,
        title: format!("P{page_id}"),
        text: "body".into(),
        created_at: stamp.parse().unwrap(),
        url: String::new(),
    };
    let corpus = vec![
        article(1, "2021-08-31T23:59:59Z"),
        article(2, "2021-09-01T00:00:00Z"),
        article(3, "2021-09-30T23:59:59Z"),
        article(4, "2021-10-01T00:00:00Z"),
        article(5, "2021-10-01T00:00:01Z"),
        article(6, "2021-11-15T12:00:00Z"),
        article(7, "2022-03-01T00:00:00Z"),
    ];
    let cutoff = CutoffMonth::parse("2021-09").unwrap();
    let kept = filter_by_creation(&corpus, cutoff);
    assert_eq!(
        kept.iter().map(|a| a.page_id).collect::<Vec<_>>(),
        vec![4, 5, 6, 7],
        "exactly the October-2021-onward articles survive"
    );
    // The bundled toy corpus itself postdates the cutoff entirely.
    let toy_corpus = load_corpus(toy_dir().join("corpus.jsonl")).unwrap();
    assert_eq!(
        filter_by_creation(&toy_corpus, cutoff).len(),
        toy_corpus.len()
    );
    println!("[PASS] date-filter correctness: boundary straddle keeps October onward");
}

// ---------------------------------------------------------------------------
// Criterion 10 (optional, manual): live smoke test.
// ---------------------------------------------------------------------------

#[tokio::test]
async fn acceptance_10_live_smoke() {
    if std::env::var("RAGFORGE_LIVE_SMOKE").ok().as_deref() != Some("1") {
        println!("[SKIP] live smoke test (set RAGFORGE_LIVE_SMOKE=1 and RAGFORGE_API_KEY to run)");
        return;
    }
    let scratch = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(scratch.path(), Mode::Live, 2);
    cfg.transcript = None;
    cfg.dataset_tag = DatasetTag::Random;
    cfg.strategies = vec![StrategyKind::NaiveRag];
    let corpus = load_corpus(toy_dir().join("corpus.jsonl")).unwrap();
    save_corpus(&corpus[..5], cfg.corpus_path()).unwrap();
    run_pipeline(
        &cfg,
        &[
            Stage::Dataset,
            Stage::Store,
            Stage::Run,
            Stage::Judge,
            Stage::Report,
        ],
        None,
    )
    .await
    .unwrap();

    let traces = load_traces(cfg.run_path(StrategyKind::NaiveRag)).unwrap();
    assert!(!traces.is_empty());
    for trace in &traces {
        let usage = trace.total_usage();
        assert!(usage.input_tokens > 0, "live usage must be reported");
        assert!(usage.output_tokens > 0, "live usage must be reported");
    }
    let scores = ragforge_core::judge::load_scores(cfg.eval_path(StrategyKind::NaiveRag)).unwrap();
    for score in &scores {
        assert!((1..=5).contains(&score.truthfulness));
        assert!((1..=5).contains(&score.relevance));
    }
    println!(
        "[PASS] live smoke: {} questions end-to-end, structural checks only",
        traces.len()
    );
}
