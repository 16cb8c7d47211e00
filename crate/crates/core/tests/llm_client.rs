use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread;

use chartmeta::caption::{CaptionError, CaptionSource, LlmClient};
use chartmeta::pipeline::{run_all, CaptionMode, PipelineConfig, CARDS_FILE};
use chartmeta::LlmEndpointConfig;
use serde_json::{json, Value};

/// Serves the scripted `(status, body)` responses in order, one per
/// connection, recording each request body.
struct MockServer {
    base_url: String,
    requests: Arc<Mutex<Vec<Value>>>,
}

fn completion(text: &str) -> String {
    json!({ "choices": [{ "message": { "role": "assistant", "content": text } }] }).to_string()
}

impl MockServer {
    fn start(script: Vec<(u16, String)>) -> Self {
        Self::start_with(move |i, _| script.get(i).cloned().unwrap_or((500, "script exhausted".into())))
    }

    fn start_with(respond: impl Fn(usize, &Value) -> (u16, String) + Send + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = requests.clone();
        thread::spawn(move || {
            for (i, stream) in listener.incoming().enumerate() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                let mut line = String::new();
                loop {
                    line.clear();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap_or(0);
                        }
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let req: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                let (status, text) = respond(i, &req);
                log.lock().unwrap().push(req);
                let resp = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                    text.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        MockServer { base_url, requests }
    }

    fn hits(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

fn endpoint(base_url: &str) -> LlmEndpointConfig {
    LlmEndpointConfig {
        base_url: base_url.to_string(),
        model: "mock-model".into(),
        api_key_env: "CHARTMETA_TEST_UNSET_KEY".into(),
        timeout_secs: 5.0,
        max_retries: 3,
        backoff_base_ms: 1,
        ..Default::default()
    }
}

#[test]
fn retries_server_errors_then_succeeds() {
    let server = MockServer::start(vec![
        (500, "boom".into()),
        (500, "boom".into()),
        (200, completion("  Sales rise steadily.  ")),
    ]);
    let client = LlmClient::new(endpoint(&server.base_url), None).unwrap();
    assert_eq!(client.generate("describe").unwrap(), "Sales rise steadily.");
    assert_eq!(server.hits(), 3);
    let req = &server.requests.lock().unwrap()[2];
    assert_eq!(req["model"], "mock-model");
    assert_eq!(req["temperature"], 0.0);
    assert_eq!(req["seed"], 0);
    assert_eq!(req["messages"][0]["content"], "describe");
}

#[test]
fn rate_limit_is_retried() {
    let server = MockServer::start(vec![(429, "slow down".into()), (200, completion("ok"))]);
    let client = LlmClient::new(endpoint(&server.base_url), None).unwrap();
    assert_eq!(client.generate("p").unwrap(), "ok");
    assert_eq!(server.hits(), 2);
}

#[test]
fn gives_up_after_max_retries() {
    let server = MockServer::start(vec![(503, "down".into()); 10]);
    let mut cfg = endpoint(&server.base_url);
    cfg.max_retries = 2;
    let client = LlmClient::new(cfg, None).unwrap();
    match client.generate("p") {
        Err(CaptionError::HttpError { status: 503, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(server.hits(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(vec![(400, r#"{"error":"bad"}"#.into()), (200, completion("never"))]);
    let client = LlmClient::new(endpoint(&server.base_url), None).unwrap();
    match client.generate("p") {
        Err(CaptionError::HttpError { status: 400, body }) => assert!(body.contains("bad")),
        other => panic!("{other:?}"),
    }
    assert_eq!(server.hits(), 1);
}

#[test]
fn empty_or_malformed_completion_is_an_error() {
    let server = MockServer::start(vec![(200, completion("   ")), (200, "{}".into())]);
    let client = LlmClient::new(endpoint(&server.base_url), None).unwrap();
    assert!(matches!(client.generate("a"), Err(CaptionError::EmptyCompletion)));
    assert!(matches!(client.generate("b"), Err(CaptionError::BadResponse(_))));
}

#[test]
fn cache_serves_repeat_prompts_without_requests() {
    let server = MockServer::start(vec![(200, completion("first")), (200, completion("second"))]);
    let dir = tempfile::tempdir().unwrap();
    let client = LlmClient::new(endpoint(&server.base_url), Some(dir.path())).unwrap();
    assert_eq!(client.generate("same").unwrap(), "first");
    assert_eq!(client.generate("same").unwrap(), "first");
    assert_eq!(server.hits(), 1);

    // A fresh client over the same directory still hits the cache.
    let again = LlmClient::new(endpoint(&server.base_url), Some(dir.path())).unwrap();
    assert_eq!(again.generate("same").unwrap(), "first");
    assert_eq!(again.generate("other").unwrap(), "second");
    assert_eq!(server.hits(), 2);
}

#[test]
fn connection_refused_surfaces_after_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut cfg = endpoint(&format!("http://127.0.0.1:{port}/v1"));
    cfg.max_retries = 1;
    let client = LlmClient::new(cfg, None).unwrap();
    assert!(matches!(client.generate("p"), Err(CaptionError::Transport(_))));
}

#[test]
fn pipeline_llm_mode_uses_endpoint() {
    let server = MockServer::start_with(|_, req| {
        let prompt = req["messages"][0]["content"].as_str().unwrap_or("");
        let text = if prompt.contains("Computed facts:") {
            "Analysis text."
        } else {
            "Overview text."
        };
        (200, completion(text))
    });
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir_all(&input).unwrap();
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample_corpus/t00_monthly_sales.csv");
    std::fs::copy(src, input.join("t00.csv")).unwrap();
    let cfg = PipelineConfig {
        input_glob: format!("{}/*.csv", input.display()),
        workspace_dir: dir.path().join("ws"),
        caption_mode: CaptionMode::Llm,
        llm: endpoint(&server.base_url),
        parallelism: 2,
        ..Default::default()
    };
    let report = run_all(&cfg).unwrap();
    assert!(server.hits() >= 1);
    assert!(server.hits() <= 2 * report.cards);
    let cards = chartmeta::cards::read_cards(&cfg.workspace_dir.join(CARDS_FILE)).unwrap();
    for c in &cards {
        assert_eq!(c.captions.generator, CaptionSource::Llm);
        assert_eq!(c.captions.model_id.as_deref(), Some("mock-model"));
        assert_eq!(c.captions.overview, "Overview text.");
        assert_eq!(c.captions.analysis, "Analysis text.");
    }
    assert!(cfg.workspace_dir.join("llm_cache").is_dir());
}
