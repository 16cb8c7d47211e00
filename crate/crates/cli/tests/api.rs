use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chartmeta::pipeline::{run_all, PipelineConfig};
use chartmeta::review::{ReviewConfig, ReviewStore};
use chartmeta_cli::server::router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const CORPUS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/sample_corpus");

fn workspace(dir: &Path) -> PathBuf {
    let cfg = PipelineConfig {
        input_glob: format!("{CORPUS}/t0[0-1]_*.csv"),
        workspace_dir: dir.join("ws"),
        parallelism: 1,
        ..Default::default()
    };
    run_all(&cfg).unwrap();
    cfg.workspace_dir
}

fn app(ws: &Path, static_dir: Option<PathBuf>) -> Router {
    router(Arc::new(ReviewStore::open(ws, ReviewConfig::default()).unwrap()), static_dir)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, v)
}

fn rating(card: &str, worker: &str, s: [i64; 4]) -> Value {
    json!({
        "card_id": card,
        "worker_id": worker,
        "scores": { "completeness": s[0], "consistency": s[1], "diversity": s[2], "readability": s[3] }
    })
}

fn ids(items: &Value) -> Vec<String> {
    items.as_array().unwrap().iter().map(|i| i["card_id"].as_str().unwrap().to_string()).collect()
}

#[tokio::test]
async fn health_and_pending_queue() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&workspace(dir.path()), None);
    let (status, health) = call(&app, "GET", "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["status"], "ok");
    let total = health["cards"].as_u64().unwrap() as usize;

    let (status, items) = call(&app, "GET", "/api/captions/pending?worker=w1&limit=5", None).await;
    assert_eq!(status, StatusCode::OK);
    let first5 = ids(&items);
    assert_eq!(first5.len(), 5);
    let mut sorted = first5.clone();
    sorted.sort();
    assert_eq!(first5, sorted);
    let item = &items[0];
    assert!(item["captions"]["overview"].is_string() && item["captions"]["analysis"].is_string());
    assert!(item["spec_summary"].is_string());
    assert_eq!(item["vega_lite"]["$schema"].as_str().map(|s| s.contains("vega-lite")), Some(true));

    let (_, all) = call(&app, "GET", "/api/captions/pending?worker=w1&limit=100000", None).await;
    assert_eq!(ids(&all).len(), total);
    let (_, none) = call(&app, "GET", "/api/captions/pending?worker=w1&limit=0", None).await;
    assert_eq!(none, json!([]));
    let (status, _) = call(&app, "GET", "/api/captions/pending?limit=3", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn rating_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&workspace(dir.path()), None);
    let (_, items) = call(&app, "GET", "/api/captions/pending?worker=w&limit=1", None).await;
    let card = ids(&items)[0].clone();

    let (status, body) = call(&app, "POST", "/api/ratings", Some(rating(&card, "w", [3, 3, 3, 3]))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["card_id"], card.as_str());
    assert!(body["timestamp"].is_string());

    let (status, body) = call(&app, "POST", "/api/ratings", Some(rating(&card, "w", [4, 4, 4, 4]))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "DuplicateRating");

    let (status, body) = call(&app, "POST", "/api/ratings", Some(rating(&card, "x", [3, 6, 3, 3]))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "ScoreOutOfRange");

    let (status, body) = call(&app, "POST", "/api/ratings", Some(rating("nope", "x", [3, 3, 3, 3]))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "UnknownCard");

    let (status, _) = call(&app, "POST", "/api/ratings", Some(json!({ "card_id": card }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let req = Request::builder()
        .method("POST")
        .uri("/api/ratings")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::BAD_REQUEST);

    let (status, _) = call(&app, "GET", "/api/nowhere", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn review_loop_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path());
    let app = app(&ws, None);

    let (_, stats) = call(&app, "GET", "/api/stats", None).await;
    assert_eq!(stats["rating_count"], 0);
    assert_eq!(stats["pass_rate_defined"], false);

    let (_, items) = call(&app, "GET", "/api/captions/pending?worker=alice&limit=3", None).await;
    let cards = ids(&items);

    // All 3s passes at threshold 3.
    let (s, _) = call(&app, "POST", "/api/ratings", Some(rating(&cards[0], "alice", [3, 3, 3, 3]))).await;
    assert_eq!(s, StatusCode::CREATED);
    let (_, stats) = call(&app, "GET", "/api/stats", None).await;
    assert_eq!(stats["rating_count"], 1);
    assert_eq!(stats["histograms"]["completeness"], json!([0, 0, 1, 0, 0]));
    assert_eq!(stats["pass_rate"], 100.0);

    let (_, after) = call(&app, "GET", "/api/captions/pending?worker=alice&limit=100000", None).await;
    assert!(!ids(&after).contains(&cards[0]));
    let (_, bob) = call(&app, "GET", "/api/captions/pending?worker=bob&limit=1", None).await;
    assert_eq!(ids(&bob), vec![cards[0].clone()]);

    // Readability {2, 4} has median 3 and passes; consistency {2, 2} fails.
    call(&app, "POST", "/api/ratings", Some(rating(&cards[1], "alice", [5, 5, 5, 2]))).await;
    call(&app, "POST", "/api/ratings", Some(rating(&cards[1], "bob", [4, 4, 4, 4]))).await;
    call(&app, "POST", "/api/ratings", Some(rating(&cards[2], "alice", [4, 2, 4, 4]))).await;
    call(&app, "POST", "/api/ratings", Some(rating(&cards[2], "bob", [4, 2, 4, 4]))).await;

    let (status, verdicts) = call(&app, "POST", "/api/aggregate", None).await;
    assert_eq!(status, StatusCode::OK);
    let by_id = |id: &str| verdicts.as_array().unwrap().iter().find(|v| v["card_id"] == id).unwrap().clone();
    assert_eq!(by_id(&cards[0])["passed"], true);
    let v1 = by_id(&cards[1]);
    assert_eq!(v1["medians"]["readability"], 3.0);
    assert_eq!(v1["rating_count"], 2);
    assert_eq!(v1["passed"], true);
    assert_eq!(by_id(&cards[2])["passed"], false);

    let (_, again) = call(&app, "POST", "/api/aggregate", None).await;
    assert_eq!(again, verdicts);
    let (_, stats) = call(&app, "GET", "/api/stats", None).await;
    assert_eq!(stats["rating_count"], 5);
    assert_eq!(stats["cards"]["passed"], 2);
    assert_eq!(stats["cards"]["failed"], 1);

    // Statuses reach the card store on disk.
    let text = std::fs::read_to_string(ws.join("cards.jsonl")).unwrap();
    let passed = text.lines().filter(|l| l.contains("\"review\":\"passed\"")).count();
    assert_eq!(passed, 2);
}

#[tokio::test]
async fn static_bundle_served_at_root() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir_all(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>review</html>").unwrap();
    let app = app(&workspace(dir.path()), Some(ui));
    let (status, body) = call(&app, "GET", "/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, "<html>review</html>");
    let (status, _) = call(&app, "GET", "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn concurrent_posts_store_each_pair_once() {
    let dir = tempfile::tempdir().unwrap();
    let ws = workspace(dir.path());
    let app = app(&ws, None);
    let (_, items) = call(&app, "GET", "/api/captions/pending?worker=w&limit=1", None).await;
    let card = ids(&items)[0].clone();
    let mut handles = Vec::new();
    for i in 0..16 {
        let app = app.clone();
        let body = rating(&card, &format!("w{}", i % 4), [4, 4, 4, 4]);
        handles.push(tokio::spawn(async move { call(&app, "POST", "/api/ratings", Some(body)).await.0 }));
    }
    let mut created = 0;
    for h in handles {
        match h.await.unwrap() {
            StatusCode::CREATED => created += 1,
            StatusCode::CONFLICT => {}
            other => panic!("{other}"),
        }
    }
    assert_eq!(created, 4);
    let lines = std::fs::read_to_string(ws.join("ratings.jsonl")).unwrap().lines().count();
    assert_eq!(lines, 4);
}
