//! Metadata cards, the card store, and the five downstream-task exports.
//!
//! `cards.jsonl` holds one [`MetadataCard`] per line, sorted by `chart_id`.
//! Every line carries `schema_version`; readers reject other versions.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::analysis::{AnalysisFact, ChartFacts, FactKind, FactValue};
use crate::caption::CaptionPair;
use crate::codegen::{data_ref, CodeArtifact, CodeGrammar, VisualElements};
use crate::format::fmt_num;
use crate::recommend::ChartSpec;
use crate::slice::{CellValue, DataSlice};
use crate::workspace::{self, StoreError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CardError {
    #[error("inconsistent parts for `{chart_id}`: {reason}")]
    InconsistentParts { chart_id: String, reason: String },
    #[error("cannot linearize an empty data slice")]
    EmptySlice,
    #[error("card `{0}` has no facts")]
    NoFacts(String),
    #[error("card store is empty")]
    EmptyStore,
    #[error("duplicate chart_id `{0}`")]
    DuplicateChartId(String),
    #[error("{path}:{line}: schema_version {found:?}, expected {SCHEMA_VERSION}")]
    SchemaMismatch {
        path: PathBuf,
        line: usize,
        found: Option<u64>,
    },
    #[error("card `{chart_id}`: review cannot go from {from:?} to {to:?}")]
    InvalidTransition {
        chart_id: String,
        from: ReviewStatus,
        to: ReviewStatus,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    #[default]
    Unreviewed,
    Passed,
    Failed,
}

/// One grammar's slot in a card: the emitted code, or the recorded reason
/// the grammar cannot express this chart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeEntry {
    Artifact(CodeArtifact),
    Unsupported { reason: String },
}

impl CodeEntry {
    pub fn artifact(&self) -> Option<&CodeArtifact> {
        match self {
            CodeEntry::Artifact(a) => Some(a),
            CodeEntry::Unsupported { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataCard {
    pub chart_id: String,
    pub source_id: String,
    pub data_slice: DataSlice,
    pub spec: ChartSpec,
    pub code: BTreeMap<CodeGrammar, CodeEntry>,
    pub elements: VisualElements,
    pub facts: Vec<AnalysisFact>,
    pub captions: CaptionPair,
    pub review: ReviewStatus,
    pub schema_version: u32,
}

impl MetadataCard {
    /// Moves an unreviewed card to passed or failed.
    pub fn set_review(&mut self, to: ReviewStatus) -> Result<(), CardError> {
        if self.review != ReviewStatus::Unreviewed || to == ReviewStatus::Unreviewed {
            return Err(CardError::InvalidTransition {
                chart_id: self.chart_id.clone(),
                from: self.review,
                to,
            });
        }
        self.review = to;
        Ok(())
    }
}

pub fn assemble_card(
    spec: &ChartSpec,
    data_slice: DataSlice,
    code: BTreeMap<CodeGrammar, CodeEntry>,
    elements: VisualElements,
    facts: ChartFacts,
    captions: CaptionPair,
) -> Result<MetadataCard, CardError> {
    let id = &spec.spec_id;
    let bad = |reason: String| CardError::InconsistentParts {
        chart_id: id.clone(),
        reason,
    };
    for (part, got) in [
        ("data slice", &data_slice.spec_id),
        ("visual elements", &elements.spec_id),
        ("facts", &facts.spec_id),
    ] {
        if got != id {
            return Err(bad(format!("{part} belong to `{got}`")));
        }
    }
    if data_slice.is_empty() {
        return Err(bad("data slice is empty".into()));
    }
    for g in CodeGrammar::ALL {
        match code.get(&g) {
            None => return Err(bad(format!("no code entry for {g}"))),
            Some(CodeEntry::Artifact(a)) => {
                if a.grammar != g {
                    return Err(bad(format!("{} artifact filed under {g}", a.grammar)));
                }
                if a.data_ref != data_ref(id) {
                    return Err(bad(format!("{g} artifact references `{}`", a.data_ref)));
                }
            }
            Some(CodeEntry::Unsupported { .. }) => {}
        }
    }
    if captions.overview.trim().is_empty() || captions.analysis.trim().is_empty() {
        return Err(bad("empty caption".into()));
    }
    Ok(MetadataCard {
        chart_id: id.clone(),
        source_id: spec.source_id.clone(),
        data_slice,
        spec: spec.clone(),
        code,
        elements,
        facts: facts.facts,
        captions,
        review: ReviewStatus::Unreviewed,
        schema_version: SCHEMA_VERSION,
    })
}

fn clean_cell(s: &str) -> String {
    s.replace('|', "/").replace(['\n', '\r'], " ")
}

/// `" | "`-separated header line followed by one line per row.
pub fn linearize_table(slice: &DataSlice) -> Result<String, CardError> {
    if slice.is_empty() {
        return Err(CardError::EmptySlice);
    }
    let mut lines = vec![slice
        .header()
        .iter()
        .map(|h| clean_cell(h))
        .collect::<Vec<_>>()
        .join(" | ")];
    for row in slice.rows() {
        let cells: Vec<String> = row
            .iter()
            .map(|c| match c {
                CellValue::Number(v) => fmt_num(*v),
                CellValue::Text(t) => clean_cell(t),
            })
            .collect();
        lines.push(cells.join(" | "));
    }
    Ok(lines.join("\n"))
}

/// One question/answer pair per fact.
pub fn generate_qa(card: &MetadataCard) -> Result<Vec<(String, String)>, CardError> {
    if card.facts.is_empty() {
        return Err(CardError::NoFacts(card.chart_id.clone()));
    }
    let x = &card.spec.x_encoding.field;
    let mut out = Vec::with_capacity(card.facts.len());
    for f in &card.facts {
        let y = f.target.field();
        let pair = match (&f.kind, &f.value) {
            (FactKind::Trend, FactValue::Label(label)) => (
                format!("Is {y} increasing, decreasing, or stable over {x}?"),
                label.clone(),
            ),
            (FactKind::Outliers, FactValue::Indices(idx)) => (
                format!("How many outlier points does {y} contain?"),
                idx.len().to_string(),
            ),
            (FactKind::Correlation, FactValue::Number(r)) => {
                let (a, b) = match &f.target {
                    crate::analysis::FactTarget::Pair(a, b) => (a.as_str(), b.as_str()),
                    crate::analysis::FactTarget::Field(a) => (x.as_str(), a.as_str()),
                };
                (format!("What is the correlation between {a} and {b}?"), fmt_num(*r))
            }
            (kind, FactValue::Number(v)) => {
                (format!("What is the {} of {y}?", kind.label()), fmt_num(*v))
            }
            _ => continue,
        };
        out.push(pair);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Retrieval,
    ToTable,
    Summary,
    Description,
    Qa,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Retrieval, Task::ToTable, Task::Summary, Task::Description, Task::Qa];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Retrieval => "retrieval",
            Task::ToTable => "to_table",
            Task::Summary => "summary",
            Task::Description => "description",
            Task::Qa => "qa",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task `{s}` (expected one of retrieval, to_table, summary, description, qa)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskExample {
    pub task: Task,
    pub chart_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_text: Option<String>,
    pub target_text: String,
}

fn example(task: Task, card: &MetadataCard, input_text: Option<String>, target: &str) -> TaskExample {
    TaskExample {
        task,
        chart_ref: card.chart_id.clone(),
        input_text,
        target_text: target.to_string(),
    }
}

/// Training records for `task`, cards taken in `chart_id` order.
pub fn export_task(
    cards: &[MetadataCard],
    task: Task,
    review_filter: bool,
) -> Result<Vec<TaskExample>, CardError> {
    if cards.is_empty() {
        return Err(CardError::EmptyStore);
    }
    let mut selected: Vec<&MetadataCard> = cards
        .iter()
        .filter(|c| !review_filter || c.review == ReviewStatus::Passed)
        .collect();
    if selected.is_empty() {
        warn!(task = %task, cards = cards.len(), "review filter excluded every card; export is empty");
        return Ok(Vec::new());
    }
    selected.sort_by(|a, b| a.chart_id.cmp(&b.chart_id));

    let mut out = Vec::new();
    for card in selected {
        match task {
            Task::Retrieval => {
                out.push(example(task, card, None, &card.captions.overview));
                out.push(example(task, card, None, &card.captions.analysis));
            }
            Task::ToTable => out.push(example(task, card, None, &linearize_table(&card.data_slice)?)),
            Task::Summary => out.push(example(task, card, None, &card.captions.overview)),
            Task::Description => out.push(example(task, card, None, &card.captions.analysis)),
            Task::Qa => {
                let table = linearize_table(&card.data_slice)?;
                for (q, a) in generate_qa(card)? {
                    out.push(example(task, card, Some(format!("{q}\n\n{table}")), &a));
                }
            }
        }
    }
    Ok(out)
}

pub fn export_jsonl(cards: &[MetadataCard], task: Task, review_filter: bool) -> Result<String, CardError> {
    Ok(workspace::to_jsonl(&export_task(cards, task, review_filter)?))
}

fn check_unique(cards: &[MetadataCard]) -> Result<(), CardError> {
    let mut seen = HashSet::new();
    for c in cards {
        if !seen.insert(c.chart_id.as_str()) {
            return Err(CardError::DuplicateChartId(c.chart_id.clone()));
        }
    }
    Ok(())
}

/// Rewrites the whole store, sorted by `chart_id`.
pub fn write_cards(path: &Path, cards: &[MetadataCard]) -> Result<(), CardError> {
    check_unique(cards)?;
    let mut sorted: Vec<&MetadataCard> = cards.iter().collect();
    sorted.sort_by(|a, b| a.chart_id.cmp(&b.chart_id));
    workspace::write_jsonl(path, &sorted)?;
    Ok(())
}

pub fn read_cards(path: &Path) -> Result<Vec<MetadataCard>, CardError> {
    let raw: Vec<serde_json::Value> = workspace::read_jsonl(path)?;
    let mut cards = Vec::with_capacity(raw.len());
    for (i, v) in raw.into_iter().enumerate() {
        let found = v.get("schema_version").and_then(|s| s.as_u64());
        if found != Some(SCHEMA_VERSION as u64) {
            return Err(CardError::SchemaMismatch {
                path: path.to_path_buf(),
                line: i + 1,
                found,
            });
        }
        let card = serde_json::from_value(v).map_err(|e| StoreError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        cards.push(card);
    }
    check_unique(&cards)?;
    Ok(cards)
}

/// Append handle for a card store; appends go through one lock.
#[derive(Debug)]
pub struct CardStore {
    path: PathBuf,
    ids: Mutex<HashSet<String>>,
}

impl CardStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, CardError> {
        let path = path.into();
        let ids = if path.exists() {
            read_cards(&path)?.into_iter().map(|c| c.chart_id).collect()
        } else {
            HashSet::new()
        };
        Ok(CardStore {
            path,
            ids: Mutex::new(ids),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, card: &MetadataCard) -> Result<(), CardError> {
        let mut ids = self.ids.lock().unwrap_or_else(|e| e.into_inner());
        if ids.contains(&card.chart_id) {
            return Err(CardError::DuplicateChartId(card.chart_id.clone()));
        }
        workspace::append_jsonl(&self.path, card)?;
        ids.insert(card.chart_id.clone());
        Ok(())
    }

    pub fn load(&self) -> Result<Vec<MetadataCard>, CardError> {
        read_cards(&self.path)
    }
}
