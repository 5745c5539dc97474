//! MediaWiki client parsing against a local API double.

use std::collections::HashMap;

use axum::extract::Query;
use axum::routing::get;
use axum::{Json, Router};
use serde_json::{json, Value};

use ragforge_core::wiki::{fetch_random, MediaWikiClient};

async fn api_handler(Query(params): Query<HashMap<String, String>>) -> Json<Value> {
    if params.get("list").map(String::as_str) == Some("random") {
        return Json(json!({
            "query": {
                "random": [
                    {"id": 101, "ns": 0, "title": "Alpha"},
                    {"id": 202, "ns": 0, "title": "Beta"},
                    {"id": 303, "ns": 0, "title": "Gamma"}
                ]
            }
        }));
    }
    let pageid = params.get("pageids").cloned().unwrap_or_default();
    if params.get("prop").map(String::as_str) == Some("extracts|info") {
        // Page 303 has no usable extract and must be skipped, not fail.
        let body = match pageid.as_str() {
            "101" => {
                json!({"extract": "Alpha body text.", "canonicalurl": "https://wiki.test/Alpha"})
            }
            "202" => {
                json!({"extract": "Beta body text.", "canonicalurl": "https://wiki.test/Beta"})
            }
            _ => json!({"missing": ""}),
        };
        return Json(json!({"query": {"pages": {pageid: body}}}));
    }
    // Oldest-revision timestamp lookup.
    let revisions = match pageid.as_str() {
        "101" => json!([{"timestamp": "2021-10-05T08:00:00Z"}]),
        "202" => json!([{"timestamp": "2022-02-11T20:30:00Z"}]),
        _ => json!([]),
    };
    Json(json!({"query": {"pages": {pageid: {"revisions": revisions}}}}))
}

#[tokio::test]
async fn fetches_and_parses_pages_from_the_action_api() {
    let app = Router::new().route("/w/api.php", get(api_handler));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });

    let api_url = format!("http://{addr}/w/api.php");
    let client = MediaWikiClient::new(Some(&api_url));
    let outcome = fetch_random(&client, 3, 2).await.unwrap();

    assert_eq!(outcome.articles.len(), 2, "page without extract is skipped");
    assert_eq!(outcome.skipped, 1);
    let alpha = &outcome.articles[0];
    assert_eq!(alpha.page_id, 101);
    assert_eq!(alpha.title, "Alpha");
    assert_eq!(alpha.text, "Alpha body text.");
    assert_eq!(alpha.url, "https://wiki.test/Alpha");
    assert_eq!(alpha.created_at.to_rfc3339(), "2021-10-05T08:00:00+00:00");
    assert_eq!(outcome.articles[1].page_id, 202);
}
