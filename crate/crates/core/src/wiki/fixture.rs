//! Canned wiki source for tests and offline runs.

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{IngestError, PageDetail, PageStub, WikiSource};

/// One canned page.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixturePage {
    pub page_id: u64,
    pub title: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub url: Option<String>,
}

/// Serves pages from a fixed list. The live random API takes no seed, so the
/// seed here only selects a deterministic permutation of the fixture — test
/// determinism, not reproducible live sampling.
pub struct FixtureWiki {
    pages: Vec<FixturePage>,
    seed: Option<u64>,
}

impl FixtureWiki {
    pub fn new(pages: Vec<FixturePage>) -> Self {
        Self { pages, seed: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)
            .map_err(|e| IngestError::Io(format!("cannot read {}: {e}", path.display())))?;
        let pages: Vec<FixturePage> = serde_json::from_str(&raw)
            .map_err(|e| IngestError::Io(format!("bad fixture {}: {e}", path.display())))?;
        Ok(Self::new(pages))
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[async_trait]
impl WikiSource for FixtureWiki {
    async fn random_pages(&self, n: usize) -> Result<Vec<PageStub>, IngestError> {
        let mut order: Vec<usize> = (0..self.pages.len()).collect();
        if let Some(seed) = self.seed {
            let mut state = seed;
            for i in (1..order.len()).rev() {
                let j = (splitmix64(&mut state) % (i as u64 + 1)) as usize;
                order.swap(i, j);
            }
        }
        Ok(order
            .into_iter()
            .take(n)
            .map(|i| PageStub {
                page_id: self.pages[i].page_id,
                title: self.pages[i].title.clone(),
            })
            .collect())
    }

    async fn page_detail(&self, stub: &PageStub) -> Result<Option<PageDetail>, IngestError> {
        Ok(self
            .pages
            .iter()
            .find(|p| p.page_id == stub.page_id)
            .map(|p| PageDetail {
                text: p.text.clone(),
                created_at: p.created_at,
                url: p
                    .url
                    .clone()
                    .unwrap_or_else(|| format!("https://en.wikipedia.org/?curid={}", p.page_id)),
            }))
    }
}

/// Fixture source that repeats pages, for dedup tests.
#[cfg(test)]
pub struct RepeatingFixture(pub FixtureWiki, pub usize);

#[cfg(test)]
#[async_trait]
impl WikiSource for RepeatingFixture {
    async fn random_pages(&self, n: usize) -> Result<Vec<PageStub>, IngestError> {
        let base = self.0.random_pages(n).await?;
        let mut out = Vec::new();
        for stub in base.iter().cycle().take(base.len() * self.1) {
            out.push(stub.clone());
        }
        out.truncate(n.max(base.len() * self.1));
        Ok(out)
    }

    async fn page_detail(&self, stub: &PageStub) -> Result<Option<PageDetail>, IngestError> {
        self.0.page_detail(stub).await
    }
}
