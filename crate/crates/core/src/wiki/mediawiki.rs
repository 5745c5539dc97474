//! Live MediaWiki Action API client.
//!
//! Three query shapes: the random listing (redirects excluded), plain-text
//! extracts with canonical URLs, and the oldest-revision timestamp. Requests
//! are throttled to stay polite against the public API.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde_json::Value;

use super::{IngestError, PageDetail, PageStub, WikiSource};

const DEFAULT_API: &str = "https://en.wikipedia.org/w/api.php";
const USER_AGENT: &str = concat!("ragforge/", env!("CARGO_PKG_VERSION"), " (research tool)");
const RANDOM_BATCH: usize = 500;

pub struct MediaWikiClient {
    api_url: String,
    client: reqwest::Client,
    min_gap: Duration,
    last_request: Mutex<Instant>,
}

impl MediaWikiClient {
    pub fn new(api_url: Option<&str>) -> Self {
        Self {
            api_url: api_url.unwrap_or(DEFAULT_API).to_string(),
            client: reqwest::Client::builder()
                .user_agent(USER_AGENT)
                .timeout(Duration::from_secs(30))
                .build()
                .expect("client construction cannot fail"),
            // 10 requests per second.
            min_gap: Duration::from_millis(100),
            last_request: Mutex::new(Instant::now() - Duration::from_secs(1)),
        }
    }

    async fn throttle(&self) {
        let wait = {
            let mut last = self.last_request.lock().expect("throttle lock poisoned");
            let now = Instant::now();
            let elapsed = now.duration_since(*last);
            if elapsed >= self.min_gap {
                *last = now;
                None
            } else {
                let wait = self.min_gap - elapsed;
                *last = now + wait;
                Some(wait)
            }
        };
        if let Some(wait) = wait {
            tokio::time::sleep(wait).await;
        }
    }

    async fn get(&self, params: &[(&str, &str)]) -> Result<Value, IngestError> {
        self.throttle().await;
        let mut query = vec![("format", "json"), ("action", "query")];
        query.extend_from_slice(params);
        let resp = self
            .client
            .get(&self.api_url)
            .query(&query)
            .send()
            .await
            .map_err(|e| IngestError::Api(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(IngestError::Api(format!(
                "{} returned {}",
                self.api_url,
                resp.status()
            )));
        }
        resp.json()
            .await
            .map_err(|e| IngestError::Api(format!("bad API JSON: {e}")))
    }
}

#[async_trait]
impl WikiSource for MediaWikiClient {
    async fn random_pages(&self, n: usize) -> Result<Vec<PageStub>, IngestError> {
        let mut stubs = Vec::with_capacity(n);
        while stubs.len() < n {
            let batch = (n - stubs.len()).min(RANDOM_BATCH).to_string();
            let v = self
                .get(&[
                    ("list", "random"),
                    ("rnnamespace", "0"),
                    ("rnfilterredir", "nonredirects"),
                    ("rnlimit", &batch),
                ])
                .await?;
            let Some(items) = v["query"]["random"].as_array() else {
                return Err(IngestError::Api(
                    "random listing missing query.random".into(),
                ));
            };
            if items.is_empty() {
                break;
            }
            for item in items {
                let (Some(id), Some(title)) = (item["id"].as_u64(), item["title"].as_str()) else {
                    continue;
                };
                stubs.push(PageStub {
                    page_id: id,
                    title: title.to_string(),
                });
            }
        }
        Ok(stubs)
    }

    async fn page_detail(&self, stub: &PageStub) -> Result<Option<PageDetail>, IngestError> {
        let id = stub.page_id.to_string();

        let extract = self
            .get(&[
                ("prop", "extracts|info"),
                ("explaintext", "1"),
                ("inprop", "url"),
                ("pageids", &id),
            ])
            .await?;
        let page = &extract["query"]["pages"][&id];
        if page.get("missing").is_some() {
            return Ok(None);
        }
        let Some(text) = page["extract"].as_str().filter(|t| !t.trim().is_empty()) else {
            return Ok(None);
        };
        let url = page["canonicalurl"]
            .as_str()
            .map(str::to_string)
            .unwrap_or_else(|| format!("https://en.wikipedia.org/?curid={id}"));

        let revision = self
            .get(&[
                ("prop", "revisions"),
                ("rvprop", "timestamp"),
                ("rvdir", "newer"),
                ("rvlimit", "1"),
                ("pageids", &id),
            ])
            .await?;
        let Some(stamp) = revision["query"]["pages"][&id]["revisions"][0]["timestamp"].as_str()
        else {
            // Revision history unavailable: skip, do not fail the run.
            return Ok(None);
        };
        let created_at: DateTime<Utc> = stamp
            .parse()
            .map_err(|e| IngestError::Api(format!("bad revision timestamp '{stamp}': {e}")))?;

        Ok(Some(PageDetail {
            text: text.to_string(),
            created_at,
            url,
        }))
    }
}
