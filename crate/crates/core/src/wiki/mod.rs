//! Wikipedia article ingestion and knowledge-cutoff date filtering.

mod fixture;
mod mediawiki;

pub use fixture::FixtureWiki;
pub use mediawiki::MediaWikiClient;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use async_trait::async_trait;
use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("wiki api error: {0}")]
    Api(String),
    #[error("invalid cutoff '{0}': expected YYYY-MM")]
    BadCutoff(String),
    #[error("io error: {0}")]
    Io(String),
}

/// A fetched Wikipedia page with its first-revision timestamp.
///
/// "Created" means the timestamp of the oldest revision; Wikipedia exposes no
/// dedicated creation field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub page_id: u64,
    pub title: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub url: String,
}

/// Counts along the filter cascade: fetched, date-filtered, recency-classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_r: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_d: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_f: Option<u64>,
}

/// A knowledge-cutoff month. Articles survive the filter when created on or
/// after the first instant of the following month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffMonth {
    pub year: i32,
    pub month: u32,
}

impl CutoffMonth {
    pub fn new(year: i32, month: u32) -> Result<Self, IngestError> {
        if !(1..=12).contains(&month) {
            return Err(IngestError::BadCutoff(format!("{year}-{month:02}")));
        }
        Ok(Self { year, month })
    }

    pub fn parse(s: &str) -> Result<Self, IngestError> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| IngestError::BadCutoff(s.to_string()))?;
        let year: i32 = y
            .parse()
            .map_err(|_| IngestError::BadCutoff(s.to_string()))?;
        let month: u32 = m
            .parse()
            .map_err(|_| IngestError::BadCutoff(s.to_string()))?;
        Self::new(year, month)
    }

    /// First instant after the cutoff month; articles created at or after
    /// this boundary survive the date filter.
    pub fn boundary(&self) -> DateTime<Utc> {
        let (year, month) = if self.month == 12 {
            (self.year + 1, 1)
        } else {
            (self.year, self.month + 1)
        };
        let date = NaiveDate::from_ymd_opt(year, month, 1).expect("valid month arithmetic");
        Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight exists"))
    }

    /// Human-readable phrasing used inside classification prompts.
    pub fn describe(&self) -> String {
        const MONTHS: [&str; 12] = [
            "January",
            "February",
            "March",
            "April",
            "May",
            "June",
            "July",
            "August",
            "September",
            "October",
            "November",
            "December",
        ];
        format!("{} {}", MONTHS[(self.month - 1) as usize], self.year)
    }
}

impl std::fmt::Display for CutoffMonth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{:02}", self.year, self.month)
    }
}

/// A page reference returned by the random listing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageStub {
    pub page_id: u64,
    pub title: String,
}

/// Resolved page content and creation timestamp.
#[derive(Debug, Clone)]
pub struct PageDetail {
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub url: String,
}

/// Source of random pages: the live MediaWiki API or a canned fixture.
#[async_trait]
pub trait WikiSource: Send + Sync {
    /// Up to `n` random page stubs. May contain duplicates; callers dedup.
    async fn random_pages(&self, n: usize) -> Result<Vec<PageStub>, IngestError>;

    /// Full detail for one page, or `None` when the page should be skipped
    /// (missing extract, unavailable revision history, redirect).
    async fn page_detail(&self, stub: &PageStub) -> Result<Option<PageDetail>, IngestError>;
}

/// Outcome of a fetch run, with dedup/skip bookkeeping.
#[derive(Debug)]
pub struct FetchOutcome {
    pub articles: Vec<Article>,
    pub duplicates_dropped: u64,
    pub skipped: u64,
}

/// Fetches up to `n` distinct articles from `source`, resolving each page's
/// first-revision timestamp. Detail lookups run with bounded parallelism but
/// results keep listing order, so output is stable for a fixed source.
pub async fn fetch_random(
    source: &dyn WikiSource,
    n: usize,
    concurrency: usize,
) -> Result<FetchOutcome, IngestError> {
    let stubs = source.random_pages(n).await?;
    let mut seen = HashSet::new();
    let mut unique = Vec::new();
    let mut duplicates_dropped = 0u64;
    for stub in stubs {
        if seen.insert(stub.page_id) {
            unique.push(stub);
        } else {
            duplicates_dropped += 1;
        }
    }
    unique.truncate(n);

    let details = stream::iter(
        unique
            .iter()
            .map(|stub| async move { (stub.clone(), source.page_detail(stub).await) }),
    )
    .buffered(concurrency.max(1))
    .collect::<Vec<_>>()
    .await;

    let mut articles = Vec::new();
    let mut skipped = 0u64;
    for (stub, detail) in details {
        match detail {
            Ok(Some(d)) => articles.push(Article {
                page_id: stub.page_id,
                title: stub.title,
                text: d.text,
                created_at: d.created_at,
                url: d.url,
            }),
            Ok(None) => {
                log::warn!(
                    "skipping page {} ({}): no usable content",
                    stub.page_id,
                    stub.title
                );
                skipped += 1;
            }
            Err(e) => {
                log::warn!("skipping page {} ({}): {e}", stub.page_id, stub.title);
                skipped += 1;
            }
        }
    }
    Ok(FetchOutcome {
        articles,
        duplicates_dropped,
        skipped,
    })
}

/// Keeps exactly the articles created strictly after the cutoff month,
/// preserving input order.
pub fn filter_by_creation(articles: &[Article], cutoff: CutoffMonth) -> Vec<Article> {
    let boundary = cutoff.boundary();
    articles
        .iter()
        .filter(|a| a.created_at >= boundary)
        .cloned()
        .collect()
}

/// First `k` articles in stored order.
pub fn take_prefix(articles: &[Article], k: usize) -> Vec<Article> {
    articles.iter().take(k).cloned().collect()
}

/// Writes a corpus as JSONL, one article per line.
pub fn save_corpus(articles: &[Article], path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    let mut file = File::create(path)
        .map_err(|e| IngestError::Io(format!("cannot write {}: {e}", path.display())))?;
    for article in articles {
        let line = serde_json::to_string(article).map_err(|e| IngestError::Io(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| IngestError::Io(e.to_string()))?;
    }
    Ok(())
}

/// Reads a JSONL corpus.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Article>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| IngestError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut articles = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IngestError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let article: Article = serde_json::from_str(&line).map_err(|e| {
            IngestError::Io(format!(
                "bad corpus line {} in {}: {e}",
                lineno + 1,
                path.display()
            ))
        })?;
        articles.push(article);
    }
    Ok(articles)
}

#[cfg(test)]
pub(crate) fn test_article(page_id: u64, created_at: &str) -> Article {
    Article {
        page_id,
        title: format!("Page {page_id}"),
        text: format!("Body of page {page_id}."),
        created_at: created_at.parse().expect("valid RFC 3339 timestamp"),
        url: format!("https://en.wikipedia.org/?curid={page_id}"),
    }
}
