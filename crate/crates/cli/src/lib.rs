//! `chartmeta` command line: every pipeline stage as a subcommand over a
//! shared workspace directory, plus metric evaluation and the review server.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error, 3 I/O error.

pub mod server;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chartmeta::caption::CaptionError;
use chartmeta::cards::CardError;
use chartmeta::eval::{self, EvalError, EvalReport};
use chartmeta::pipeline::{self, CaptionMode, PipelineConfig, PipelineError};
use chartmeta::review::{ReviewError, ReviewStore};
use chartmeta::workspace::StoreError;
use chartmeta::{ChartType, Task};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "chartmeta", version, about = "Build chart-understanding datasets from CSV tables")]
pub struct Cli {
    /// JSON config file; flags given on the command line override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Workspace directory holding every stage's outputs.
    #[arg(long, short = 'w', global = true, value_name = "DIR")]
    pub workspace: Option<PathBuf>,
    /// Worker threads for per-table and per-chart fan-out.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Emit logs as JSON lines on stderr.
    #[arg(long, global = true)]
    pub json: bool,
    /// Log filter, e.g. `info` or `chartmeta=debug`. `RUST_LOG` takes precedence.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, profile and clean every CSV matching the input glob.
    Ingest(IngestArgs),
    /// Split each clean table into chart specs.
    Recommend(RecommendArgs),
    /// Emit chart code in all three grammars.
    Codegen(CodegenArgs),
    /// Compute analysis facts for every chart.
    Analyze,
    /// Write the overview/analysis caption pair for every chart.
    Caption(CaptionArgs),
    /// Bundle stage outputs into cards.jsonl.
    Assemble,
    /// Write `<task>.jsonl` training files from the card store.
    Export(ExportArgs),
    /// Score predictions against gold data and print an EvalReport.
    Eval(EvalArgs),
    /// Serve the caption-review API.
    ReviewServe(ServeArgs),
    /// Print rating histograms and pass rate.
    Stats(ReviewArgs),
    /// Run every stage and all five exports.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Glob of CSV files to ingest.
    #[arg(long)]
    pub input_glob: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct RecommendArgs {
    #[arg(long)]
    pub max_specs: Option<usize>,
    #[arg(long)]
    pub min_specs: Option<usize>,
    #[arg(long)]
    pub min_score: Option<f64>,
    /// Comma-separated chart types to enable (default: all eleven).
    #[arg(long, value_delimiter = ',')]
    pub types: Option<Vec<String>>,
}

#[derive(Debug, Args, Default)]
pub struct CodegenArgs {
    /// Shell command run per emitted artifact; `{path}` is replaced by its path.
    #[arg(long)]
    pub render_command: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Template,
    Llm,
}

#[derive(Debug, Args, Default)]
pub struct CaptionArgs {
    #[arg(long, value_enum)]
    pub caption_mode: Option<ModeArg>,
    #[arg(long)]
    pub llm_base_url: Option<String>,
    #[arg(long)]
    pub llm_model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long)]
    pub llm_api_key_env: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Task name(s), comma-separated, or `all`.
    #[arg(long, required = true, value_delimiter = ',')]
    pub task: Vec<String>,
    /// Export only cards whose review passed.
    #[arg(long)]
    pub review_filter: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// rouge, meteor, table, accuracy, retrieval, recall, mrr, ndcg or loss.
    #[arg(long)]
    pub metric: String,
    /// Predictions JSONL ({id, prediction}) or, for retrieval metrics, ranked lists.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Gold export file (`<task>.jsonl`).
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Query embeddings JSONL ({id, vector, relevant_id?}).
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Chart embeddings JSONL ({id, vector}).
    #[arg(long)]
    pub charts: Option<PathBuf>,
    #[arg(long, default_value_t = eval::DEFAULT_REL_TOL)]
    pub rel_tol: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub k: Vec<usize>,
    /// Ranking depth when ranking from embeddings.
    #[arg(long, default_value_t = 100)]
    pub depth: usize,
    /// Temperature for the contrastive loss (required for `loss`).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct ReviewArgs {
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub min_raters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Built review UI bundle served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// File of allowed worker ids, one per line.
    #[arg(long)]
    pub workers: Option<PathBuf>,
    #[command(flatten)]
    pub review: ReviewArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub input_glob: Option<String>,
    #[command(flatten)]
    pub recommend: RecommendArgs,
    #[command(flatten)]
    pub codegen: CodegenArgs,
    #[command(flatten)]
    pub caption: CaptionArgs,
    #[arg(long)]
    pub review_filter: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

fn store_error(e: &StoreError) -> CliError {
    match e {
        StoreError::Io { .. } => CliError::Io(e.to_string()),
        StoreError::Record { .. } => CliError::Data(e.to_string()),
    }
}

impl From<CardError> for CliError {
    fn from(e: CardError) -> Self {
        match &e {
            CardError::Store(s) => store_error(s),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CaptionError> for CliError {
    fn from(e: CaptionError) -> Self {
        match &e {
            CaptionError::InvalidConfig(_) | CaptionError::MissingApiKey(_) => CliError::Usage(e.to_string()),
            CaptionError::HttpError { .. }
            | CaptionError::Timeout { .. }
            | CaptionError::Transport(_)
            | CaptionError::Cache { .. } => CliError::Io(e.to_string()),
            CaptionError::EmptyCompletion | CaptionError::BadResponse(_) | CaptionError::Lineage { .. } => {
                CliError::Data(e.to_string())
            }
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) => CliError::Usage(e.to_string()),
            PipelineError::NoInputs(_) | PipelineError::MissingStage { .. } => CliError::Io(e.to_string()),
            PipelineError::Data(_) => CliError::Data(e.to_string()),
            PipelineError::Store(s) => store_error(&s),
            PipelineError::Card(c) => c.into(),
            PipelineError::Caption(c) => c.into(),
        }
    }
}

impl From<ReviewError> for CliError {
    fn from(e: ReviewError) -> Self {
        match e {
            ReviewError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            ReviewError::Store(s) => store_error(&s),
            ReviewError::Card(c) => c.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn eval_error(e: EvalError, file: Option<&Path>) -> CliError {
    match e {
        EvalError::UnknownMetric(_) | EvalError::InvalidK | EvalError::InvalidTau(_) => CliError::Usage(e.to_string()),
        EvalError::Store(s) => store_error(&s),
        other => match file {
            Some(f) => CliError::Data(format!("{}: {other}", f.display())),
            None => CliError::Data(other.to_string()),
        },
    }
}

pub fn init_logging(json: bool, level: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .or_else(|_| tracing_subscriber::EnvFilter::try_new(level))
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let builder = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr);
    let _ = if json { builder.json().try_init() } else { builder.try_init() };
}

/// Config file (or defaults) with global and per-command flags applied.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Io(format!("{}: config file not found", path.display())));
            }
            PipelineConfig::load(path).map_err(|e| match e {
                PipelineError::Store(StoreError::Record { .. }) | PipelineError::Config(_) => {
                    CliError::Usage(format!("{}: {e}", path.display()))
                }
                other => other.into(),
            })?
        }
        None => PipelineConfig::default(),
    };
    if let Some(w) = &cli.workspace {
        cfg.workspace_dir = w.clone();
    }
    if let Some(p) = cli.parallelism {
        cfg.parallelism = p;
    }
    match &cli.command {
        Command::Ingest(a) => apply_glob(&mut cfg, &a.input_glob),
        Command::Recommend(a) => apply_recommend(&mut cfg, a)?,
        Command::Codegen(a) => apply_codegen(&mut cfg, a),
        Command::Caption(a) => apply_caption(&mut cfg, a),
        Command::Export(a) => cfg.review_filter |= a.review_filter,
        Command::ReviewServe(a) => apply_review(&mut cfg, &a.review),
        Command::Stats(a) => apply_review(&mut cfg, a),
        Command::Run(a) => {
            apply_glob(&mut cfg, &a.input_glob);
            apply_recommend(&mut cfg, &a.recommend)?;
            apply_codegen(&mut cfg, &a.codegen);
            apply_caption(&mut cfg, &a.caption);
            cfg.review_filter |= a.review_filter;
        }
        Command::Analyze | Command::Assemble | Command::Eval(_) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_glob(cfg: &mut PipelineConfig, glob: &Option<String>) {
    if let Some(g) = glob {
        cfg.input_glob = g.clone();
    }
}

fn apply_recommend(cfg: &mut PipelineConfig, a: &RecommendArgs) -> Result<(), CliError> {
    let r = &mut cfg.recommend;
    if let Some(v) = a.max_specs {
        r.max_specs_per_table = v;
    }
    if let Some(v) = a.min_specs {
        r.min_specs_per_table = v;
    }
    if let Some(v) = a.min_score {
        r.min_score = v;
    }
    if let Some(types) = &a.types {
        r.enabled_types = types
            .iter()
            .map(|t| t.trim().parse::<ChartType>().map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<_, _>>()?;
    }
    Ok(())
}

fn apply_codegen(cfg: &mut PipelineConfig, a: &CodegenArgs) {
    if let Some(c) = &a.render_command {
        cfg.render_command = Some(c.clone());
    }
}

fn apply_caption(cfg: &mut PipelineConfig, a: &CaptionArgs) {
    if let Some(m) = a.caption_mode {
        cfg.caption_mode = match m {
            ModeArg::Template => CaptionMode::Template,
            ModeArg::Llm => CaptionMode::Llm,
        };
    }
    if let Some(v) = &a.llm_base_url {
        cfg.llm.base_url = v.clone();
    }
    if let Some(v) = &a.llm_model {
        cfg.llm.model = v.clone();
    }
    if let Some(v) = &a.llm_api_key_env {
        cfg.llm.api_key_env = v.clone();
    }
}

fn apply_review(cfg: &mut PipelineConfig, a: &ReviewArgs) {
    if let Some(t) = a.threshold {
        cfg.review.threshold = t;
    }
    if let Some(m) = a.min_raters {
        cfg.review.min_raters = m;
    }
}

fn parse_tasks(names: &[String]) -> Result<Vec<Task>, CliError> {
    if names.iter().any(|n| n == "all") {
        return Ok(Task::ALL.to_vec());
    }
    let mut tasks = Vec::new();
    for n in names {
        let t: Task = n.trim().parse().map_err(CliError::Usage)?;
        if !tasks.contains(&t) {
            tasks.push(t);
        }
    }
    Ok(tasks)
}

fn print_json<T: Serialize>(out: &mut dyn std::io::Write, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

/// Runs one parsed command, writing its JSON result to `out`.
pub fn run(cli: &Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Ingest(_) => print_json(out, &pipeline::ingest_stage(&cfg)?),
        Command::Recommend(_) => print_json(out, &pipeline::recommend_stage(&cfg)?),
        Command::Codegen(_) => print_json(out, &pipeline::codegen_stage(&cfg)?),
        Command::Analyze => print_json(out, &serde_json::json!({ "charts": pipeline::analyze_stage(&cfg)? })),
        Command::Caption(_) => print_json(out, &serde_json::json!({ "charts": pipeline::caption_stage(&cfg)? })),
        Command::Assemble => print_json(out, &serde_json::json!({ "cards": pipeline::assemble_stage(&cfg)?.len() })),
        Command::Export(a) => {
            let tasks = parse_tasks(&a.task)?;
            print_json(out, &pipeline::export_stage(&cfg, &tasks)?)
        }
        Command::Eval(a) => {
            let report = run_eval(a)?;
            if let Some(path) = &a.out {
                chartmeta::workspace::write_json(path, &report).map_err(|e| store_error(&e))?;
            }
            print_json(out, &report)
        }
        Command::Stats(_) => {
            let store = ReviewStore::open(&cfg.workspace_dir, cfg.review)?;
            print_json(out, &store.stats())
        }
        Command::ReviewServe(a) => serve(&cfg, a),
        Command::Run(_) => print_json(out, &pipeline::run_all(&cfg)?),
    }
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str, metric: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("metric `{metric}` needs --{flag}")))
}

fn ranked_lists(a: &EvalArgs) -> Result<Vec<chartmeta::RankedList>, CliError> {
    if let Some(pred) = &a.pred {
        return eval::load_ranked_lists(pred).map_err(|e| eval_error(e, Some(pred)));
    }
    let (q, c) = (require(&a.queries, "queries", &a.metric)?, require(&a.charts, "charts", &a.metric)?);
    let queries = eval::load_queries(q).map_err(|e| eval_error(e, Some(q)))?;
    let charts = eval::load_embeddings(c).map_err(|e| eval_error(e, Some(c)))?;
    eval::rank_all(&queries, &charts, a.depth).map_err(|e| eval_error(e, Some(q)))
}

pub fn run_eval(a: &EvalArgs) -> Result<EvalReport, CliError> {
    match a.metric.as_str() {
        m if eval::TEXT_METRICS.contains(&m) => {
            let pred = require(&a.pred, "pred", m)?;
            let gold = require(&a.gold, "gold", m)?;
            let preds = eval::load_predictions(pred).map_err(|e| eval_error(e, Some(pred)))?;
            let gold_records = eval::load_gold(gold).map_err(|e| eval_error(e, Some(gold)))?;
            eval::evaluate_text(m, &preds, &gold_records, a.rel_tol).map_err(|e| eval_error(e, Some(gold)))
        }
        "retrieval" | "recall" | "mrr" | "ndcg" => {
            let lists = ranked_lists(a)?;
            let mut report = eval::evaluate_retrieval(&lists, &a.k).map_err(|e| eval_error(e, None))?;
            let keep: fn(&str) -> bool = match a.metric.as_str() {
                "recall" => |k| k.starts_with("recall@"),
                "mrr" => |k| k.starts_with("mrr@"),
                "ndcg" => |k| k.starts_with("ndcg@"),
                _ => |_| true,
            };
            report.metrics.retain(|k, _| keep(k));
            Ok(report)
        }
        "loss" => contrastive_report(a),
        other => Err(CliError::Usage(format!(
            "unknown metric `{other}` (expected rouge, meteor, table, accuracy, retrieval, recall, mrr, ndcg or loss)"
        ))),
    }
}

/// Mean contrastive loss of each query against every chart, with the
/// query's relevant chart as the positive.
fn contrastive_report(a: &EvalArgs) -> Result<EvalReport, CliError> {
    let tau = a.tau.ok_or_else(|| CliError::Usage("metric `loss` needs --tau".into()))?;
    let q = require(&a.queries, "queries", "loss")?;
    let c = require(&a.charts, "charts", "loss")?;
    let queries = eval::load_queries(q).map_err(|e| eval_error(e, Some(q)))?;
    let charts = eval::load_embeddings(c).map_err(|e| eval_error(e, Some(c)))?;
    if queries.is_empty() {
        return Err(CliError::Data(format!("{}: no queries", q.display())));
    }
    let mut total = 0.0;
    for query in &queries {
        let relevant = query.relevant_id.as_deref().unwrap_or(&query.id);
        let idx = charts.iter().position(|ch| ch.id == relevant).ok_or_else(|| {
            CliError::Data(format!("{}: query `{}` names unknown chart `{relevant}`", q.display(), query.id))
        })?;
        let row = charts
            .iter()
            .map(|ch| eval::cosine_sim(&query.vector, &ch.vector))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| eval_error(e, Some(c)))?;
        total += eval::contrastive_loss(&row, idx, tau).map_err(|e| eval_error(e, None))?;
    }
    let metrics = BTreeMap::from([("loss".to_string(), total / queries.len() as f64)]);
    let config = BTreeMap::from([
        ("metric".to_string(), serde_json::json!("loss")),
        ("tau".to_string(), serde_json::json!(tau)),
        ("charts".to_string(), serde_json::json!(charts.len())),
    ]);
    EvalReport::new(metrics, queries.len(), config).map_err(|e| eval_error(e, None))
}

fn serve(cfg: &PipelineConfig, a: &ServeArgs) -> Result<(), CliError> {
    let mut store = ReviewStore::open(&cfg.workspace_dir, cfg.review)?;
    if let Some(path) = &a.workers {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        store = store.with_worker_registry(
            text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect::<Vec<_>>(),
        );
    }
    if let Some(dir) = &a.static_dir {
        if !dir.is_dir() {
            return Err(CliError::Io(format!("{}: static directory not found", dir.display())));
        }
    }
    let app = server::router(Arc::new(store), a.static_dir.clone());
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.addr)
            .await
            .map_err(|e| CliError::Io(format!("bind {}: {e}", a.addr)))?;
        tracing::info!(addr = %a.addr, workspace = %cfg.workspace_dir.display(), "review server listening");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Io(e.to_string()))
    })
}
