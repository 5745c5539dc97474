//! Run reports: score means, exact token totals, retrieval counts, the
//! strategy comparison table, and score-histogram artifacts.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetTag;
use crate::judge::{EvalScore, ScoreSummary};
use crate::strategy::{AnswerTrace, StrategyKind};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("eval scores without a matching trace: {0:?}")]
    OrphanScores(Vec<String>),
    #[error("io error: {0}")]
    Io(String),
}

/// One question's row in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerQuestion {
    pub page_id: u64,
    pub question: String,
    pub retrieved: bool,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub truthfulness: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub relevance: Option<u8>,
}

/// Aggregate over one (strategy, dataset) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub strategy: StrategyKind,
    pub dataset_tag: DatasetTag,
    pub n_questions: u64,
    pub n_scored: u64,
    pub mean_truthfulness: f64,
    pub mean_relevance: f64,
    pub n_in: u64,
    pub n_out: u64,
    pub n_retrievals: u64,
    pub per_question: Vec<PerQuestion>,
}

/// Joins traces with their scores. Every score must match a trace; traces
/// without a score are kept and flagged unscored.
pub fn build_report(
    strategy: StrategyKind,
    dataset_tag: DatasetTag,
    traces: &[AnswerTrace],
    scores: &[EvalScore],
) -> Result<RunReport, ReportError> {
    let mut by_question: HashMap<(u64, &str), &EvalScore> = HashMap::new();
    for score in scores {
        by_question.insert(
            (
                score.question_ref.page_id,
                score.question_ref.question.as_str(),
            ),
            score,
        );
    }
    let trace_keys: Vec<(u64, &str)> = traces
        .iter()
        .map(|t| (t.question_ref.page_id, t.question_ref.question.as_str()))
        .collect();
    let orphans: Vec<String> = scores
        .iter()
        .filter(|s| {
            !trace_keys.contains(&(s.question_ref.page_id, s.question_ref.question.as_str()))
        })
        .map(|s| {
            format!(
                "page {} '{}'",
                s.question_ref.page_id, s.question_ref.question
            )
        })
        .collect();
    if !orphans.is_empty() {
        return Err(ReportError::OrphanScores(orphans));
    }

    let mut per_question = Vec::with_capacity(traces.len());
    let mut n_in = 0u64;
    let mut n_out = 0u64;
    let mut n_retrievals = 0u64;
    let mut truth_sum = 0u64;
    let mut rel_sum = 0u64;
    let mut n_scored = 0u64;
    for trace in traces {
        let usage = trace.total_usage();
        n_in += usage.input_tokens;
        n_out += usage.output_tokens;
        if trace.retrieved {
            n_retrievals += 1;
        }
        let score = by_question.get(&(
            trace.question_ref.page_id,
            trace.question_ref.question.as_str(),
        ));
        if let Some(score) = score {
            truth_sum += score.truthfulness as u64;
            rel_sum += score.relevance as u64;
            n_scored += 1;
        } else {
            log::warn!("trace for page {} is unscored", trace.question_ref.page_id);
        }
        per_question.push(PerQuestion {
            page_id: trace.question_ref.page_id,
            question: trace.question_ref.question.clone(),
            retrieved: trace.retrieved,
            input_tokens: usage.input_tokens,
            output_tokens: usage.output_tokens,
            truthfulness: score.map(|s| s.truthfulness),
            relevance: score.map(|s| s.relevance),
        });
    }
    let denom = n_scored.max(1) as f64;
    Ok(RunReport {
        strategy,
        dataset_tag,
        n_questions: traces.len() as u64,
        n_scored,
        mean_truthfulness: truth_sum as f64 / denom,
        mean_relevance: rel_sum as f64 / denom,
        n_in,
        n_out,
        n_retrievals,
        per_question,
    })
}

/// Display form for token totals: exact below 10k, thousands-compacted above.
fn display_tokens(n: u64) -> String {
    if n >= 10_000 {
        format!("{}k", (n + 500) / 1000)
    } else {
        n.to_string()
    }
}

const TABLE_ROWS: [&str; 5] = ["Truthfulness", "Relevance", "n_in", "n_out", "#retrieval"];

fn row_values(report: &RunReport, row: &str, exact: bool) -> String {
    match row {
        "Truthfulness" => format!("{:.2}", report.mean_truthfulness),
        "Relevance" => format!("{:.2}", report.mean_relevance),
        "n_in" => {
            if exact {
                report.n_in.to_string()
            } else {
                display_tokens(report.n_in)
            }
        }
        "n_out" => {
            if exact {
                report.n_out.to_string()
            } else {
                display_tokens(report.n_out)
            }
        }
        "#retrieval" => report.n_retrievals.to_string(),
        _ => unreachable!("fixed row set"),
    }
}

/// Renders the strategy comparison as CSV with exact integers.
pub fn comparison_csv(reports: &[RunReport]) -> String {
    let mut out = String::from("Metric");
    for report in reports {
        out.push(',');
        out.push_str(report.strategy.table_label());
    }
    out.push('\n');
    for row in TABLE_ROWS {
        out.push_str(row);
        for report in reports {
            out.push(',');
            out.push_str(&row_values(report, row, true));
        }
        out.push('\n');
    }
    out
}

/// Renders the strategy comparison as an aligned text table; token totals use
/// the compact display form.
pub fn comparison_text(reports: &[RunReport]) -> String {
    let mut columns: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Metric".to_string()];
    header.extend(reports.iter().map(|r| r.strategy.table_label().to_string()));
    columns.push(header);
    for row in TABLE_ROWS {
        let mut cells = vec![row.to_string()];
        cells.extend(reports.iter().map(|r| row_values(r, row, false)));
        columns.push(cells);
    }
    let width: Vec<usize> = (0..columns[0].len())
        .map(|col| columns.iter().map(|row| row[col].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in columns.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&width)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = width.iter().sum::<usize>() + 2 * (width.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

/// Histogram artifact written beside the SVG.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramArtifact {
    pub n: u64,
    pub mean_truthfulness: f64,
    pub mean_relevance: f64,
    /// matrix[t][r] counts scores with truthfulness t+1 and relevance r+1.
    pub matrix: [[u64; 5]; 5],
}

fn heat_color(count: u64, max: u64) -> String {
    if max == 0 || count == 0 {
        return "#f7f7f7".to_string();
    }
    // White to deep blue ramp, integer channels for byte-stable output.
    let t = count as f64 / max as f64;
    let r = (247.0 - 214.0 * t) as u8;
    let g = (247.0 - 174.0 * t) as u8;
    let b = (247.0 - 70.0 * t) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Renders the 5×5 joint histogram as a deterministic SVG heatmap.
pub fn histogram_svg(summary: &ScoreSummary) -> String {
    const CELL: u64 = 56;
    const LEFT: u64 = 64;
    const TOP: u64 = 40;
    let width = LEFT + 5 * CELL + 16;
    let height = TOP + 5 * CELL + 56;
    let max = summary
        .histogram
        .iter()
        .flatten()
        .copied()
        .max()
        .unwrap_or(0);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"20\" text-anchor=\"middle\">truthfulness vs relevance (n={})</text>\n",
        width / 2,
        summary.n
    ));
    // Truthfulness grows downward rows 5..1 so high scores sit at the top.
    for (row, truth) in (1..=5u64).rev().enumerate() {
        let y = TOP + row as u64 * CELL;
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">t={truth}</text>\n",
            LEFT - 8,
            y + CELL / 2 + 4
        ));
        for rel in 1..=5u64 {
            let x = LEFT + (rel - 1) * CELL;
            let count = summary.histogram[(truth - 1) as usize][(rel - 1) as usize];
            svg.push_str(&format!(
                "  <rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\" \
stroke=\"#999\"/>\n",
                heat_color(count, max)
            ));
            svg.push_str(&format!(
                "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{count}</text>\n",
                x + CELL / 2,
                y + CELL / 2 + 4
            ));
        }
    }
    for rel in 1..=5u64 {
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">r={rel}</text>\n",
            LEFT + (rel - 1) * CELL + CELL / 2,
            TOP + 5 * CELL + 20
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">mean t={:.2} r={:.2}</text>\n",
        width / 2,
        TOP + 5 * CELL + 44,
        summary.mean_truthfulness,
        summary.mean_relevance
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Writes the histogram as a JSON matrix and an SVG heatmap.
pub fn emit_histogram(
    summary: &ScoreSummary,
    json_path: impl AsRef<Path>,
    svg_path: impl AsRef<Path>,
) -> Result<(), ReportError> {
    let artifact = HistogramArtifact {
        n: summary.n,
        mean_truthfulness: summary.mean_truthfulness,
        mean_relevance: summary.mean_relevance,
        matrix: summary.histogram,
    };
    let json =
        serde_json::to_string_pretty(&artifact).map_err(|e| ReportError::Io(e.to_string()))?;
    std::fs::write(json_path.as_ref(), json + "\n").map_err(|e| {
        ReportError::Io(format!(
            "cannot write {}: {e}",
            json_path.as_ref().display()
        ))
    })?;
    std::fs::write(svg_path.as_ref(), histogram_svg(summary)).map_err(|e| {
        ReportError::Io(format!("cannot write {}: {e}", svg_path.as_ref().display()))
    })?;
    Ok(())
}
