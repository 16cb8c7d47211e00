//! Two-dimensional chart captions: a high-level overview and a
//! fact-grounded analysis.
//!
//! Captions come either from a chat-completions HTTP endpoint or from a
//! deterministic template. LLM responses are cached on disk keyed by
//! `sha256(model, prompt)`, so reruns are free and reproducible.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, warn};

use crate::analysis::{AnalysisFact, ChartFacts, FactKind, FactValue};
use crate::codegen::VisualElements;
use crate::recommend::{ChartSpec, ChartType};

pub const OVERVIEW_MAX_CHARS: usize = 500;
pub const NO_FACTS_MARKER: &str = "(no computed facts)";
const ANALYSIS_MAX_FACTS: usize = 4;

#[derive(Debug, Error)]
pub enum CaptionError {
    #[error("endpoint returned HTTP {status}: {body}")]
    HttpError { status: u16, body: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned an empty completion")]
    EmptyCompletion,
    #[error("malformed completion response: {0}")]
    BadResponse(String),
    #[error("missing API key: environment variable `{0}` is not set")]
    MissingApiKey(String),
    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),
    #[error("caption cache I/O at {path}: {source}")]
    Cache {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("facts belong to chart `{found}`, expected `{expected}`")]
    Lineage { expected: String, found: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    Llm,
    Template,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionPair {
    pub overview: String,
    pub analysis: String,
    pub generator: CaptionSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmEndpointConfig {
    /// Base URL; requests go to `<base_url>/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key. The key itself is never
    /// written to config files or logs.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
    /// Retry delay is `backoff_base_ms * 2^attempt`, jittered by ±20%.
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        LlmEndpointConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "llama-3.1-70b-instruct".into(),
            api_key_env: "CHARTMETA_LLM_API_KEY".into(),
            timeout_secs: 60.0,
            max_retries: 3,
            temperature: 0.0,
            seed: Some(0),
            backoff_base_ms: 1000,
            max_in_flight: 4,
        }
    }
}

impl LlmEndpointConfig {
    pub fn validate(&self) -> Result<(), CaptionError> {
        if !(self.timeout_secs > 0.0) {
            return Err(CaptionError::InvalidConfig("timeout_secs must be > 0".into()));
        }
        if self.max_in_flight == 0 {
            return Err(CaptionError::InvalidConfig("max_in_flight must be >= 1".into()));
        }
        if self.base_url.is_empty() || self.model.is_empty() {
            return Err(CaptionError::InvalidConfig("base_url and model are required".into()));
        }
        Ok(())
    }
}

fn value_summary(spec: &ChartSpec) -> String {
    let parts: Vec<String> = spec.value_encodings().iter().map(|e| e.describe()).collect();
    parts.join(" and ")
}

/// Overview and analysis prompts for one chart. Both are pure functions of
/// their inputs.
pub fn build_prompts(
    spec: &ChartSpec,
    facts: &[AnalysisFact],
    elements: &VisualElements,
) -> (String, String) {
    let mut context = String::new();
    let _ = writeln!(context, "Chart type: {} chart", spec.chart_type.display_name());
    let _ = writeln!(context, "Title: {}", spec.title);
    let _ = writeln!(
        context,
        "X axis: {} ({})",
        spec.x_encoding.field,
        spec.x_encoding.kind.as_str()
    );
    let _ = writeln!(context, "Values: {}", value_summary(spec));
    if let Some(series) = &spec.series_field {
        let _ = writeln!(context, "Grouped by: {series}");
    }
    if !elements.legend_entries.is_empty() {
        let _ = writeln!(context, "Legend: {}", elements.legend_entries.join(", "));
    }
    let _ = writeln!(context, "Source table: {}", spec.source_id);

    let overview = format!(
        "You are describing a data chart.\n\n{context}\n\
         Write one paragraph that gives a high-level overview of this chart: \
         what kind of chart it is, which fields it plots, and what topic the data covers. \
         Do not list individual data values."
    );

    let mut fact_lines = String::new();
    if facts.is_empty() {
        let _ = writeln!(fact_lines, "- {NO_FACTS_MARKER}");
    }
    for f in facts {
        let _ = writeln!(fact_lines, "- [{}] {}", f.kind.label(), f.text);
    }
    let analysis = format!(
        "You are analysing the data behind a chart.\n\n{context}\n\
         Computed facts:\n{fact_lines}\n\
         Write one paragraph interpreting these facts: highlight the key patterns, \
         trends and anomalies a reader should notice. Only state numbers that appear in the facts."
    );
    (overview, analysis)
}

fn truncate_chars(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        return s.to_string();
    }
    let mut out: String = s.chars().take(max - 3).collect();
    out.push_str("...");
    out
}

fn overview_sentence(spec: &ChartSpec) -> String {
    let ty = spec.chart_type.display_name();
    let x = &spec.x_encoding.field;
    match spec.chart_type {
        ChartType::Histogram => format!("This {ty} chart shows the distribution of {x}."),
        ChartType::Box => format!("This {ty} chart shows the spread of {x}."),
        ChartType::Heatmap => format!(
            "This {ty} chart shows {} by {x} and {}.",
            spec.y_encodings[1].describe(),
            spec.y_encodings[0].field
        ),
        _ => {
            let mut s = format!("This {ty} chart shows {} by {x}", value_summary(spec));
            if let Some(series) = &spec.series_field {
                let _ = write!(s, ", grouped by {series}");
            }
            s.push('.');
            s
        }
    }
}

fn is_salient(f: &AnalysisFact) -> bool {
    match (&f.kind, &f.value) {
        (FactKind::Outliers, FactValue::Indices(idx)) => !idx.is_empty(),
        (FactKind::Trend | FactKind::Maximum | FactKind::Mean, _) => true,
        _ => false,
    }
}

/// Deterministic caption pair built from the chart's spec and facts.
pub fn generate_template(
    spec: &ChartSpec,
    facts: &[AnalysisFact],
    elements: &VisualElements,
) -> CaptionPair {
    let mut overview = overview_sentence(spec);
    if !elements.legend_entries.is_empty() {
        let _ = write!(overview, " The legend lists {}.", elements.legend_entries.join(", "));
    }
    let _ = write!(overview, " The chart is titled \"{}\".", spec.title);

    let mut picked: Vec<&AnalysisFact> = Vec::new();
    for kind in [FactKind::Trend, FactKind::Outliers, FactKind::Maximum, FactKind::Mean] {
        picked.extend(facts.iter().filter(|f| f.kind == kind && is_salient(f)));
    }
    picked.truncate(ANALYSIS_MAX_FACTS);
    let analysis = if picked.is_empty() {
        "No statistical facts were computed for this chart.".to_string()
    } else {
        picked.iter().map(|f| f.text.as_str()).collect::<Vec<_>>().join(" ")
    };
    CaptionPair {
        overview: truncate_chars(&overview, OVERVIEW_MAX_CHARS),
        analysis,
        generator: CaptionSource::Template,
        model_id: None,
    }
}

/// Content-addressed response cache: one file per `(model, prompt)`.
#[derive(Debug)]
pub struct PromptCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl PromptCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        PromptCache {
            dir: dir.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn key(model: &str, prompt: &str) -> String {
        let mut h = Sha256::new();
        h.update(model.as_bytes());
        h.update([0]);
        h.update(prompt.as_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.txt"))
    }

    pub fn get(&self, model: &str, prompt: &str) -> Option<String> {
        std::fs::read_to_string(self.path(&Self::key(model, prompt))).ok()
    }

    pub fn put(&self, model: &str, prompt: &str, text: &str) -> Result<(), CaptionError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let path = self.path(&Self::key(model, prompt));
        crate::workspace::write_atomic(&path, text.as_bytes()).map_err(|source| CaptionError::Cache {
            path: path.clone(),
            source,
        })
    }
}

/// Blocking chat-completions client with retry and on-disk caching.
pub struct LlmClient {
    cfg: LlmEndpointConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    cache: Option<PromptCache>,
}

impl LlmClient {
    /// Reads the API key from `cfg.api_key_env`. A missing key is allowed
    /// (local endpoints often need none) and only logged.
    pub fn new(cfg: LlmEndpointConfig, cache_dir: Option<&Path>) -> Result<Self, CaptionError> {
        cfg.validate()?;
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            warn!(var = %cfg.api_key_env, "no LLM API key set; sending unauthenticated requests");
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| CaptionError::Transport(e.to_string()))?;
        Ok(LlmClient {
            cfg,
            api_key,
            http,
            cache: cache_dir.map(PromptCache::new),
        })
    }

    pub fn config(&self) -> &LlmEndpointConfig {
        &self.cfg
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.cfg.backoff_base_ms as f64 * 2f64.powi(attempt as i32);
        let jitter = rand::rng().random_range(0.8..=1.2);
        Duration::from_secs_f64(base * jitter / 1000.0)
    }

    fn request_body(&self, prompt: &str) -> serde_json::Value {
        let mut body = json!({
            "model": self.cfg.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": self.cfg.temperature,
        });
        if let Some(seed) = self.cfg.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    /// Trimmed completion text for `prompt`, served from cache when present.
    pub fn generate(&self, prompt: &str) -> Result<String, CaptionError> {
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&self.cfg.model, prompt)) {
            debug!(key = %PromptCache::key(&self.cfg.model, prompt), "caption cache hit");
            return Ok(hit);
        }
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let body = self.request_body(prompt);
        debug!(%url, request = %body, authorization = if self.api_key.is_some() { "Bearer [redacted]" } else { "none" }, "LLM request");

        let mut attempt = 0;
        loop {
            let mut req = self.http.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let outcome = match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    debug!(status = status.as_u16(), response = %text, "LLM response");
                    if status.is_success() {
                        return self.finish(prompt, &text);
                    }
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    let err = CaptionError::HttpError {
                        status: status.as_u16(),
                        body: truncate_chars(&text, 200),
                    };
                    if !retryable {
                        return Err(err);
                    }
                    err
                }
                Err(e) if e.is_timeout() => CaptionError::Timeout { attempts: attempt + 1 },
                Err(e) => CaptionError::Transport(e.to_string()),
            };
            if attempt >= self.cfg.max_retries {
                return Err(outcome);
            }
            let wait = self.backoff(attempt);
            warn!(attempt, error = %outcome, wait_ms = wait.as_millis() as u64, "retrying LLM request");
            std::thread::sleep(wait);
            attempt += 1;
        }
    }

    fn finish(&self, prompt: &str, body: &str) -> Result<String, CaptionError> {
        let v: serde_json::Value =
            serde_json::from_str(body).map_err(|e| CaptionError::BadResponse(e.to_string()))?;
        let content = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| CaptionError::BadResponse("missing choices[0].message.content".into()))?
            .trim()
            .to_string();
        if content.is_empty() {
            return Err(CaptionError::EmptyCompletion);
        }
        if let Some(cache) = &self.cache {
            cache.put(&self.cfg.model, prompt, &content)?;
        }
        Ok(content)
    }
}

/// Caption source used by the pipeline.
pub enum CaptionGenerator {
    Template,
    Llm(LlmClient),
}

impl CaptionGenerator {
    pub fn caption(
        &self,
        spec: &ChartSpec,
        facts: &ChartFacts,
        elements: &VisualElements,
    ) -> Result<CaptionPair, CaptionError> {
        if facts.spec_id != spec.spec_id {
            return Err(CaptionError::Lineage {
                expected: spec.spec_id.clone(),
                found: facts.spec_id.clone(),
            });
        }
        match self {
            CaptionGenerator::Template => Ok(generate_template(spec, &facts.facts, elements)),
            CaptionGenerator::Llm(client) => {
                let (overview_prompt, analysis_prompt) = build_prompts(spec, &facts.facts, elements);
                Ok(CaptionPair {
                    overview: client.generate(&overview_prompt)?,
                    analysis: client.generate(&analysis_prompt)?,
                    generator: CaptionSource::Llm,
                    model_id: Some(client.config().model.clone()),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::facts_for_chart;
    use crate::codegen::derive_visual_elements;
    use crate::ingest::{clean_table, RawTable};
    use crate::recommend::{recommend, RecommendConfig};
    use crate::slice::slice_for_spec;

    fn line_chart(values: &[f64]) -> (ChartSpec, ChartFacts, VisualElements) {
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, v)| vec![format!("2021-{:02}", i + 1), v.to_string()])
            .collect();
        let table = clean_table(&RawTable {
            source_id: "shop".into(),
            header: vec!["month".into(), "sales".into()],
            rows,
        })
        .unwrap();
        let spec = recommend(&table, &RecommendConfig::default()).unwrap().remove(0);
        assert_eq!(spec.chart_type, ChartType::Line);
        let slice = slice_for_spec(&spec, &table).unwrap();
        let facts = facts_for_chart(&spec, &slice).unwrap();
        let ve = derive_visual_elements(&spec, &slice).unwrap();
        (spec, facts, ve)
    }

    #[test]
    fn overview_prompt_names_type_and_fields() {
        let (spec, facts, ve) = line_chart(&[1.0, 2.0, 3.0, 4.0]);
        let (o, a) = build_prompts(&spec, &facts.facts, &ve);
        assert!(o.contains("line chart") && o.contains("sales") && o.contains("month"));
        assert!(a.contains("The mean of sales is 2.5."));
        assert_eq!((o.clone(), a.clone()), build_prompts(&spec, &facts.facts, &ve));
        let (_, empty) = build_prompts(&spec, &[], &ve);
        assert!(empty.contains(NO_FACTS_MARKER));
    }

    #[test]
    fn template_leads_with_trend() {
        let (spec, facts, ve) = line_chart(&[1.0, 2.0, 3.0, 4.0]);
        let pair = generate_template(&spec, &facts.facts, &ve);
        assert!(pair.overview.starts_with("This line chart shows sales by month."));
        assert!(pair.analysis.starts_with("sales shows an increasing trend over month."));
        assert_eq!(pair, generate_template(&spec, &facts.facts, &ve));
        assert_eq!(pair.generator, CaptionSource::Template);
    }

    #[test]
    fn template_without_trend_uses_max_then_mean() {
        let (spec, facts, ve) = line_chart(&[1.0, 2.0, 3.0, 4.0]);
        let scalars: Vec<AnalysisFact> = facts
            .facts
            .iter()
            .filter(|f| FactKind::SCALARS.contains(&f.kind))
            .cloned()
            .collect();
        let pair = generate_template(&spec, &scalars, &ve);
        assert_eq!(pair.analysis, "The maximum of sales is 4. The mean of sales is 2.5.");
    }

    #[test]
    fn overview_is_capped() {
        let (mut spec, facts, ve) = line_chart(&[1.0, 2.0]);
        spec.title = "x".repeat(900);
        let pair = generate_template(&spec, &facts.facts, &ve);
        assert_eq!(pair.overview.chars().count(), OVERVIEW_MAX_CHARS);
    }

    #[test]
    fn lineage_is_checked() {
        let (spec, mut facts, ve) = line_chart(&[1.0, 2.0]);
        facts.spec_id = "other".into();
        assert!(matches!(
            CaptionGenerator::Template.caption(&spec, &facts, &ve),
            Err(CaptionError::Lineage { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = LlmEndpointConfig { timeout_secs: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(LlmEndpointConfig::default().validate().is_ok());
    }
}
