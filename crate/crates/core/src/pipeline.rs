//! Stage orchestration over an on-disk workspace.
//!
//! Each stage reads earlier stages' files and commits its own with an
//! atomic rename, so any stage can be re-run in isolation:
//!
//! | stage     | reads                                  | writes                                  |
//! |-----------|----------------------------------------|-----------------------------------------|
//! | ingest    | `input_glob`                           | `tables.jsonl`, `ingest_report.json`    |
//! | recommend | `tables.jsonl`                         | `specs.jsonl`, `specs/<id>.json`        |
//! | codegen   | `tables.jsonl`, `specs.jsonl`          | `charts.jsonl`, `charts/<id>.*`         |
//! | analyze   | `specs.jsonl`, `charts.jsonl`          | `facts.jsonl`                           |
//! | caption   | specs, charts, facts                   | `captions.jsonl`                        |
//! | assemble  | specs, charts, facts, captions         | `cards.jsonl`                           |
//! | export    | `cards.jsonl`                          | `<task>.jsonl`                          |
//!
//! Work fans out per table or per chart on a rayon pool; results are
//! collected in input order, so outputs do not depend on scheduling.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::analysis::{facts_for_chart, ChartFacts};
use crate::caption::{CaptionError, CaptionGenerator, CaptionPair, LlmClient, LlmEndpointConfig};
use crate::cards::{self, assemble_card, CardError, CodeEntry, MetadataCard, Task};
use crate::codegen::{data_ref, derive_visual_elements, emit_code, CodeGrammar, CodegenError, VisualElements};
use crate::ingest::{clean_table, parse_csv, CleanTable, CleaningLog};
use crate::recommend::{recommend, ChartSpec, RecommendConfig, RecommendError};
use crate::review::ReviewConfig;
use crate::slice::{slice_for_spec, DataSlice};
use crate::workspace::{self, StoreError};

pub const TABLES_FILE: &str = "tables.jsonl";
pub const INGEST_REPORT_FILE: &str = "ingest_report.json";
pub const SPECS_FILE: &str = "specs.jsonl";
pub const CHARTS_FILE: &str = "charts.jsonl";
pub const FACTS_FILE: &str = "facts.jsonl";
pub const CAPTIONS_FILE: &str = "captions.jsonl";
pub const CARDS_FILE: &str = "cards.jsonl";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no input files match `{0}`")]
    NoInputs(String),
    #[error("{0}")]
    Data(String),
    #[error("missing stage output {path}; run the `{stage}` stage first")]
    MissingStage { path: PathBuf, stage: &'static str },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Card(#[from] CardError),
    #[error(transparent)]
    Caption(#[from] CaptionError),
}

impl PipelineError {
    /// True for failures caused by the filesystem rather than the data.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            PipelineError::MissingStage { .. }
                | PipelineError::Store(StoreError::Io { .. })
                | PipelineError::Card(CardError::Store(StoreError::Io { .. }))
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionMode {
    #[default]
    Template,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input_glob: String,
    pub workspace_dir: PathBuf,
    pub recommend: RecommendConfig,
    pub caption_mode: CaptionMode,
    pub llm: LlmEndpointConfig,
    pub review: ReviewConfig,
    pub review_filter: bool,
    pub parallelism: usize,
    /// Reserved; every stage is deterministic.
    pub seed: u64,
    /// Also write each spec to `specs/<id>.json`.
    pub write_spec_files: bool,
    /// Shell command run once per emitted artifact after codegen, with
    /// `{path}` replaced by the artifact path. Failures are only logged.
    pub render_command: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input_glob: "data/sample_corpus/*.csv".into(),
            workspace_dir: "workspace".into(),
            recommend: RecommendConfig::default(),
            caption_mode: CaptionMode::Template,
            llm: LlmEndpointConfig::default(),
            review: ReviewConfig::default(),
            review_filter: false,
            parallelism: 4,
            seed: 0,
            write_spec_files: true,
            render_command: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let r = &self.recommend;
        if r.min_specs_per_table < 1 || r.max_specs_per_table < r.min_specs_per_table {
            return Err(PipelineError::Config(format!(
                "need max_specs_per_table >= min_specs_per_table >= 1, got max {} min {}",
                r.max_specs_per_table, r.min_specs_per_table
            )));
        }
        if r.enabled_types.is_empty() {
            return Err(PipelineError::Config("enabled_types is empty".into()));
        }
        if !r.min_score.is_finite() {
            return Err(PipelineError::Config("min_score must be finite".into()));
        }
        if self.parallelism < 1 {
            return Err(PipelineError::Config("parallelism must be >= 1".into()));
        }
        self.review.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.caption_mode == CaptionMode::Llm {
            self.llm.validate()?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = workspace::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn path(&self, file: &str) -> PathBuf {
        self.workspace_dir.join(file)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, PipelineError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallelism)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))
    }
}

fn read_stage<T: serde::de::DeserializeOwned>(
    cfg: &PipelineConfig,
    file: &str,
    stage: &'static str,
) -> Result<Vec<T>, PipelineError> {
    let path = cfg.path(file);
    if !path.exists() {
        return Err(PipelineError::MissingStage { path, stage });
    }
    Ok(workspace::read_jsonl(&path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedInput {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub files_read: usize,
    pub tables_kept: usize,
    pub rejected: Vec<RejectedInput>,
    pub cleaning: BTreeMap<String, CleaningLog>,
}

/// Source id of an input file: its name without the `.csv` extension.
pub fn source_id_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

pub fn ingest_stage(cfg: &PipelineConfig) -> Result<IngestReport, PipelineError> {
    let mut paths: Vec<PathBuf> = glob::glob(&cfg.input_glob)
        .map_err(|e| PipelineError::Config(format!("bad input_glob `{}`: {e}", cfg.input_glob)))?
        .filter_map(Result::ok)
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(PipelineError::NoInputs(cfg.input_glob.clone()));
    }
    let mut seen: HashMap<String, &Path> = HashMap::new();
    for p in &paths {
        if let Some(prev) = seen.insert(source_id_for(p), p) {
            return Err(PipelineError::Data(format!(
                "{} and {} map to the same source id",
                prev.display(),
                p.display()
            )));
        }
    }

    let results: Vec<Result<CleanTable, String>> = cfg.pool()?.install(|| {
        paths
            .par_iter()
            .map(|p| {
                let bytes = std::fs::read(p).map_err(|e| format!("read failed: {e}"))?;
                let raw = parse_csv(&source_id_for(p), &bytes).map_err(|e| e.to_string())?;
                clean_table(&raw).map_err(|e| e.to_string())
            })
            .collect()
    });

    let mut tables = Vec::new();
    let mut rejected = Vec::new();
    for (p, r) in paths.iter().zip(results) {
        match r {
            Ok(t) => tables.push(t),
            Err(error) => {
                warn!(path = %p.display(), %error, "skipping input table");
                rejected.push(RejectedInput {
                    path: p.display().to_string(),
                    error,
                });
            }
        }
    }
    if tables.is_empty() {
        return Err(PipelineError::Data(format!(
            "none of the {} input files survived cleaning",
            paths.len()
        )));
    }
    let report = IngestReport {
        files_read: paths.len(),
        tables_kept: tables.len(),
        rejected,
        cleaning: tables
            .iter()
            .map(|t| (t.source_id.clone(), t.cleaning_log.clone()))
            .collect(),
    };
    workspace::write_jsonl(&cfg.path(TABLES_FILE), &tables)?;
    workspace::write_json(&cfg.path(INGEST_REPORT_FILE), &report)?;
    info!(files = report.files_read, kept = report.tables_kept, "ingest done");
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendReport {
    pub tables: usize,
    pub specs: usize,
    pub specs_per_table: BTreeMap<String, usize>,
    pub skipped_tables: Vec<String>,
}

pub fn recommend_stage(cfg: &PipelineConfig) -> Result<RecommendReport, PipelineError> {
    let tables: Vec<CleanTable> = read_stage(cfg, TABLES_FILE, "ingest")?;
    let results: Vec<Result<Vec<ChartSpec>, RecommendError>> = cfg
        .pool()?
        .install(|| tables.par_iter().map(|t| recommend(t, &cfg.recommend)).collect());

    let mut specs = Vec::new();
    let mut per_table = BTreeMap::new();
    let mut skipped = Vec::new();
    for (t, r) in tables.iter().zip(results) {
        match r {
            Ok(s) => {
                per_table.insert(t.source_id.clone(), s.len());
                specs.extend(s);
            }
            Err(e) => {
                warn!(source = %t.source_id, error = %e, "no charts for table");
                skipped.push(t.source_id.clone());
            }
        }
    }
    workspace::write_jsonl(&cfg.path(SPECS_FILE), &specs)?;
    if cfg.write_spec_files {
        for s in &specs {
            workspace::write_json(&cfg.path(&format!("specs/{}.json", s.spec_id)), s)?;
        }
    }
    info!(tables = tables.len(), specs = specs.len(), "recommend done");
    Ok(RecommendReport {
        tables: tables.len(),
        specs: specs.len(),
        specs_per_table: per_table,
        skipped_tables: skipped,
    })
}

/// Per-chart output of the codegen stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartRender {
    pub chart_id: String,
    pub data_slice: DataSlice,
    pub code: BTreeMap<CodeGrammar, CodeEntry>,
    pub elements: VisualElements,
}

pub fn render_chart(spec: &ChartSpec, table: &CleanTable) -> Result<ChartRender, PipelineError> {
    let data = |e: String| PipelineError::Data(format!("chart {}: {e}", spec.spec_id));
    let slice = slice_for_spec(spec, table).map_err(|e| data(e.to_string()))?;
    let mut code = BTreeMap::new();
    for g in CodeGrammar::ALL {
        let entry = match emit_code(spec, &slice, g) {
            Ok(a) => CodeEntry::Artifact(a),
            Err(CodegenError::UnsupportedCombination { reason, .. }) => CodeEntry::Unsupported { reason },
            Err(e) => return Err(data(e.to_string())),
        };
        code.insert(g, entry);
    }
    let elements = derive_visual_elements(spec, &slice).map_err(|e| data(e.to_string()))?;
    Ok(ChartRender {
        chart_id: spec.spec_id.clone(),
        data_slice: slice,
        code,
        elements,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodegenReport {
    pub charts: usize,
    pub artifacts: usize,
    pub unsupported: usize,
    pub render_failures: usize,
}

/// Runs the render hook for one artifact; returns false on failure.
fn run_render_hook(template: &str, artifact: &Path) -> bool {
    let quoted = format!("'{}'", artifact.display().to_string().replace('\'', "'\\''"));
    let cmd = template.replace("{path}", &quoted);
    match std::process::Command::new("sh").arg("-c").arg(&cmd).output() {
        Ok(out) if out.status.success() => true,
        Ok(out) => {
            warn!(%cmd, status = %out.status, stderr = %String::from_utf8_lossy(&out.stderr).trim(), "render hook failed");
            false
        }
        Err(e) => {
            warn!(%cmd, error = %e, "render hook could not start");
            false
        }
    }
}

pub fn codegen_stage(cfg: &PipelineConfig) -> Result<CodegenReport, PipelineError> {
    let tables: Vec<CleanTable> = read_stage(cfg, TABLES_FILE, "ingest")?;
    let specs: Vec<ChartSpec> = read_stage(cfg, SPECS_FILE, "recommend")?;
    let by_source: HashMap<&str, &CleanTable> = tables.iter().map(|t| (t.source_id.as_str(), t)).collect();
    let renders: Vec<ChartRender> = cfg.pool()?.install(|| {
        specs
            .par_iter()
            .map(|s| {
                let table = by_source.get(s.source_id.as_str()).ok_or_else(|| {
                    PipelineError::Data(format!("chart {}: unknown source table `{}`", s.spec_id, s.source_id))
                })?;
                render_chart(s, table)
            })
            .collect::<Result<_, _>>()
    })?;

    let dir = cfg.path("charts");
    let mut report = CodegenReport {
        charts: renders.len(),
        artifacts: 0,
        unsupported: 0,
        render_failures: 0,
    };
    for r in &renders {
        let data_path = dir.join(data_ref(&r.chart_id));
        workspace::write_atomic(&data_path, r.data_slice.to_csv().as_bytes())
            .map_err(|e| StoreError::io(&data_path, e))?;
        for (g, entry) in &r.code {
            match entry {
                CodeEntry::Artifact(a) => {
                    let p = dir.join(format!("{}{}", r.chart_id, g.extension()));
                    workspace::write_atomic(&p, a.text.as_bytes()).map_err(|e| StoreError::io(&p, e))?;
                    report.artifacts += 1;
                    if let Some(cmd) = &cfg.render_command {
                        report.render_failures += usize::from(!run_render_hook(cmd, &p));
                    }
                }
                CodeEntry::Unsupported { .. } => report.unsupported += 1,
            }
        }
    }
    workspace::write_jsonl(&cfg.path(CHARTS_FILE), &renders)?;
    info!(charts = report.charts, artifacts = report.artifacts, "codegen done");
    Ok(report)
}

fn index_by_id<T, F: Fn(&T) -> &str>(items: &[T], id: F) -> HashMap<&str, &T> {
    items.iter().map(|t| (id(t), t)).collect()
}

fn lookup<'a, T>(map: &HashMap<&str, &'a T>, id: &str, what: &str) -> Result<&'a T, PipelineError> {
    map.get(id)
        .copied()
        .ok_or_else(|| PipelineError::Data(format!("chart {id}: no {what} record")))
}

pub fn analyze_stage(cfg: &PipelineConfig) -> Result<usize, PipelineError> {
    let specs: Vec<ChartSpec> = read_stage(cfg, SPECS_FILE, "recommend")?;
    let renders: Vec<ChartRender> = read_stage(cfg, CHARTS_FILE, "codegen")?;
    let by_id = index_by_id(&renders, |r| &r.chart_id);
    let facts: Vec<ChartFacts> = cfg.pool()?.install(|| {
        specs
            .par_iter()
            .map(|s| {
                let r = lookup(&by_id, &s.spec_id, "codegen")?;
                facts_for_chart(s, &r.data_slice)
                    .map_err(|e| PipelineError::Data(format!("chart {}: {e}", s.spec_id)))
            })
            .collect::<Result<_, _>>()
    })?;
    workspace::write_jsonl(&cfg.path(FACTS_FILE), &facts)?;
    info!(charts = facts.len(), "analyze done");
    Ok(facts.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub chart_id: String,
    pub captions: CaptionPair,
}

pub fn caption_stage(cfg: &PipelineConfig) -> Result<usize, PipelineError> {
    let specs: Vec<ChartSpec> = read_stage(cfg, SPECS_FILE, "recommend")?;
    let renders: Vec<ChartRender> = read_stage(cfg, CHARTS_FILE, "codegen")?;
    let facts: Vec<ChartFacts> = read_stage(cfg, FACTS_FILE, "analyze")?;
    let renders = index_by_id(&renders, |r| &r.chart_id);
    let facts = index_by_id(&facts, |f| &f.spec_id);

    let (generator, threads) = match cfg.caption_mode {
        CaptionMode::Template => (CaptionGenerator::Template, cfg.parallelism),
        CaptionMode::Llm => {
            let cache = cfg.path("llm_cache");
            let client = LlmClient::new(cfg.llm.clone(), Some(&cache))?;
            (CaptionGenerator::Llm(client), cfg.llm.max_in_flight.min(cfg.parallelism).max(1))
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let records: Vec<CaptionRecord> = pool.install(|| {
        specs
            .par_iter()
            .map(|s| {
                let r = lookup(&renders, &s.spec_id, "codegen")?;
                let f = lookup(&facts, &s.spec_id, "analysis")?;
                let captions = generator.caption(s, f, &r.elements)?;
                Ok(CaptionRecord {
                    chart_id: s.spec_id.clone(),
                    captions,
                })
            })
            .collect::<Result<_, PipelineError>>()
    })?;
    workspace::write_jsonl(&cfg.path(CAPTIONS_FILE), &records)?;
    info!(charts = records.len(), mode = ?cfg.caption_mode, "caption done");
    Ok(records.len())
}

pub fn assemble_stage(cfg: &PipelineConfig) -> Result<Vec<MetadataCard>, PipelineError> {
    let specs: Vec<ChartSpec> = read_stage(cfg, SPECS_FILE, "recommend")?;
    let renders: Vec<ChartRender> = read_stage(cfg, CHARTS_FILE, "codegen")?;
    let facts: Vec<ChartFacts> = read_stage(cfg, FACTS_FILE, "analyze")?;
    let captions: Vec<CaptionRecord> = read_stage(cfg, CAPTIONS_FILE, "caption")?;
    let renders = index_by_id(&renders, |r| &r.chart_id);
    let facts = index_by_id(&facts, |f| &f.spec_id);
    let captions = index_by_id(&captions, |c| &c.chart_id);

    let cards: Vec<MetadataCard> = specs
        .iter()
        .map(|s| {
            let r = lookup(&renders, &s.spec_id, "codegen")?;
            let f = lookup(&facts, &s.spec_id, "analysis")?;
            let c = lookup(&captions, &s.spec_id, "caption")?;
            Ok(assemble_card(
                s,
                r.data_slice.clone(),
                r.code.clone(),
                r.elements.clone(),
                (*f).clone(),
                c.captions.clone(),
            )?)
        })
        .collect::<Result<_, PipelineError>>()?;
    cards::write_cards(&cfg.path(CARDS_FILE), &cards)?;
    info!(cards = cards.len(), "assemble done");
    Ok(cards)
}

pub fn export_path(cfg: &PipelineConfig, task: Task) -> PathBuf {
    cfg.path(&format!("{}.jsonl", task.as_str()))
}

/// Writes `<task>.jsonl` for each task; returns record counts.
pub fn export_stage(cfg: &PipelineConfig, tasks: &[Task]) -> Result<BTreeMap<String, usize>, PipelineError> {
    let path = cfg.path(CARDS_FILE);
    if !path.exists() {
        return Err(PipelineError::MissingStage { path, stage: "assemble" });
    }
    let cards = cards::read_cards(&path)?;
    let mut counts = BTreeMap::new();
    for &task in tasks {
        let records = cards::export_task(&cards, task, cfg.review_filter)?;
        workspace::write_jsonl(&export_path(cfg, task), &records)?;
        counts.insert(task.as_str().to_string(), records.len());
    }
    info!(?counts, "export done");
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub ingest: IngestReport,
    pub recommend: RecommendReport,
    pub codegen: CodegenReport,
    pub cards: usize,
    pub exports: BTreeMap<String, usize>,
}

/// Every stage in order, then all five exports.
pub fn run_all(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let ingest = ingest_stage(cfg)?;
    let recommend = recommend_stage(cfg)?;
    let codegen = codegen_stage(cfg)?;
    analyze_stage(cfg)?;
    caption_stage(cfg)?;
    let cards = assemble_stage(cfg)?.len();
    let exports = export_stage(cfg, &Task::ALL)?;
    Ok(RunReport {
        ingest,
        recommend,
        codegen,
        cards,
        exports,
    })
}
