//! Evaluation metrics: retrieval ranking and scores, the temperature-scaled
//! contrastive loss, table extraction recall/F1, ROUGE, METEOR and relaxed
//! QA accuracy.
//!
//! Every metric is a pure function. Batch helpers compute per-item scores in
//! parallel but reduce them sequentially in input order, so results do not
//! depend on thread scheduling.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cards::TaskExample;
use crate::ingest::parse_number;
use crate::workspace::{self, StoreError};

pub const DEFAULT_REL_TOL: f64 = 0.05;
const VALUE_EPS: f64 = 1e-9;
const METEOR_SEARCH_BUDGET: usize = 200_000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("vector `{0}` is all zeros")]
    ZeroVector(String),
    #[error("vector length mismatch: expected {expected}, found {found} (`{id}`)")]
    LengthMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("temperature must be a positive finite number, got {0}")]
    InvalidTau(f64),
    #[error("index {index} out of range for {len} similarities")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no items to evaluate")]
    EmptyInput,
    #[error("k must be >= 1")]
    InvalidK,
    #[error("table line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("non-finite value for metric `{0}`")]
    NonFinite(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub ranked: Vec<String>,
    pub relevant_id: String,
}

impl RankedList {
    /// 1-based position of the relevant id, if ranked.
    pub fn rank(&self) -> Option<usize> {
        self.ranked.iter().position(|id| *id == self.relevant_id).map(|p| p + 1)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64, EvalError> {
    if u.len() != v.len() {
        return Err(EvalError::LengthMismatch {
            id: String::new(),
            expected: u.len(),
            found: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 {
        return Err(EvalError::ZeroVector("u".into()));
    }
    if nv == 0.0 {
        return Err(EvalError::ZeroVector("v".into()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

fn check_embedding(e: &Embedding, dim: usize) -> Result<(), EvalError> {
    if e.vector.len() != dim {
        return Err(EvalError::LengthMismatch {
            id: e.id.clone(),
            expected: dim,
            found: e.vector.len(),
        });
    }
    if e.vector.iter().all(|x| *x == 0.0) {
        return Err(EvalError::ZeroVector(e.id.clone()));
    }
    Ok(())
}

/// Top-`k` chart ids by cosine similarity to `query`, ties broken by id.
/// The relevant id is the query's own id; override it on the result when
/// queries and charts use different id spaces.
pub fn rank_charts(query: &Embedding, charts: &[Embedding], k: usize) -> Result<RankedList, EvalError> {
    if charts.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let dim = query.vector.len();
    check_embedding(query, dim)?;
    let mut scored = Vec::with_capacity(charts.len());
    for c in charts {
        check_embedding(c, dim)?;
        scored.push((cosine_sim(&query.vector, &c.vector)?, c.id.as_str()));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(RankedList {
        query_id: query.id.clone(),
        ranked: scored.into_iter().take(k).map(|(_, id)| id.to_string()).collect(),
        relevant_id: query.id.clone(),
    })
}

/// `-log softmax(sim / tau)[correct]`, stabilized by subtracting the row max.
pub fn contrastive_loss(sim_row: &[f64], correct_index: usize, tau: f64) -> Result<f64, EvalError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(EvalError::InvalidTau(tau));
    }
    if correct_index >= sim_row.len() {
        return Err(EvalError::IndexOutOfRange {
            index: correct_index,
            len: sim_row.len(),
        });
    }
    let scaled: Vec<f64> = sim_row.iter().map(|s| s / tau).collect();
    let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z: f64 = scaled.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    Ok(log_z - (scaled[correct_index] - m))
}

/// Mean loss over a square similarity matrix whose diagonal holds the
/// positive pairs.
pub fn contrastive_loss_batch(sim: &[Vec<f64>], tau: f64) -> Result<f64, EvalError> {
    if sim.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut total = 0.0;
    for (i, row) in sim.iter().enumerate() {
        total += contrastive_loss(row, i, tau)?;
    }
    Ok(total / sim.len() as f64)
}

fn mean_over<F: Fn(&RankedList) -> f64 + Sync + Send>(lists: &[RankedList], f: F) -> Result<f64, EvalError> {
    if lists.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let per: Vec<f64> = lists.par_iter().map(f).collect();
    Ok(per.iter().sum::<f64>() / lists.len() as f64)
}

/// Percentage of queries whose relevant id is in the top `k`.
pub fn recall_at_k(lists: &[RankedList], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    if lists.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let hits = lists.iter().filter(|l| l.rank().is_some_and(|r| r <= k)).count();
    Ok(100.0 * hits as f64 / lists.len() as f64)
}

pub fn mrr_at(lists: &[RankedList], k: usize) -> Result<f64, EvalError> {
    mean_over(lists, |l| match l.rank() {
        Some(r) if r <= k => 1.0 / r as f64,
        _ => 0.0,
    })
}

pub fn mrr_at_10(lists: &[RankedList]) -> Result<f64, EvalError> {
    mrr_at(lists, 10)
}

/// Binary single-relevant NDCG: the ideal DCG is 1.
pub fn ndcg_at(lists: &[RankedList], k: usize) -> Result<f64, EvalError> {
    mean_over(lists, |l| match l.rank() {
        Some(r) if r <= k => 1.0 / ((r + 1) as f64).log2(),
        _ => 0.0,
    })
}

pub fn ndcg_at_10(lists: &[RankedList]) -> Result<f64, EvalError> {
    ndcg_at(lists, 10)
}

/// Relative closeness: `|p - g| <= rel_tol * max(|g|, eps)`.
pub fn within_tolerance(pred: f64, gold: f64, rel_tol: f64) -> bool {
    (pred - gold).abs() <= rel_tol * gold.abs().max(VALUE_EPS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableScore {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Triple {
    key: String,
    header: String,
    value: String,
    number: Option<f64>,
}

fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Splits a linearized table into `(row key, column header, value)` triples.
///
/// The row key is the row's first cell and every other cell yields one
/// triple. A single-column table uses the 1-based row ordinal as key.
fn table_triples(text: &str) -> Result<Vec<Triple>, EvalError> {
    let lines: Vec<&str> = text.trim_end_matches(['\n', '\r']).lines().collect();
    if lines.iter().all(|l| l.trim().is_empty()) {
        return Ok(Vec::new());
    }
    let split = |l: &str| l.split('|').map(|c| c.trim().to_string()).collect::<Vec<_>>();
    let header = split(lines[0]);
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        let cells = split(line);
        if cells.len() != header.len() {
            return Err(EvalError::ParseError {
                line: i + 1,
                message: format!("{} cells, header has {}", cells.len(), header.len()),
            });
        }
        let (key, start) = if header.len() == 1 {
            (i.to_string(), 0)
        } else {
            (fold(&cells[0]), 1)
        };
        for (h, v) in header.iter().zip(&cells).skip(start) {
            out.push(Triple {
                key: key.clone(),
                header: fold(h),
                number: parse_number(v),
                value: v.clone(),
            });
        }
    }
    Ok(out)
}

fn values_match(p: &Triple, g: &Triple, rel_tol: f64) -> bool {
    match (p.number, g.number) {
        (Some(a), Some(b)) => within_tolerance(a, b, rel_tol),
        _ => p.value == g.value,
    }
}

/// Maximum bipartite matching within one (key, header) bucket.
fn bucket_matches(pred: &[&Triple], gold: &[&Triple], rel_tol: f64) -> usize {
    let adj: Vec<Vec<usize>> = pred
        .iter()
        .map(|p| (0..gold.len()).filter(|&j| values_match(p, gold[j], rel_tol)).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; gold.len()];
    fn augment(i: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|o| augment(o, adj, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    (0..pred.len())
        .filter(|&i| augment(i, &adj, &mut vec![false; gold.len()], &mut owner))
        .count()
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Triple-level recall, precision and F1 of a predicted table against gold.
/// Two empty tables score `(1, 1, 1)`; one empty table scores zero.
pub fn table_recall_f1(pred: &str, gold: &str, rel_tol: f64) -> Result<TableScore, EvalError> {
    let p = table_triples(pred)?;
    let g = table_triples(gold)?;
    if p.is_empty() || g.is_empty() {
        let v = if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
        return Ok(TableScore { recall: v, precision: v, f1: v });
    }
    let mut buckets: BTreeMap<(&str, &str), (Vec<&Triple>, Vec<&Triple>)> = BTreeMap::new();
    for t in &p {
        buckets.entry((&t.key, &t.header)).or_default().0.push(t);
    }
    for t in &g {
        buckets.entry((&t.key, &t.header)).or_default().1.push(t);
    }
    let matches: usize = buckets.values().map(|(bp, bg)| bucket_matches(bp, bg, rel_tol)).sum();
    let recall = matches as f64 / g.len() as f64;
    let precision = matches as f64 / p.len() as f64;
    Ok(TableScore {
        recall,
        precision,
        f1: harmonic(precision, recall),
    })
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// ROUGE-N F1 with clipped n-gram overlap.
pub fn rouge_n(pred: &str, reference: &str, n: usize) -> f64 {
    let (p, r) = (tokenize(pred), tokenize(reference));
    let (cp, cr) = (ngram_counts(&p, n), ngram_counts(&r, n));
    let (tp, tr): (usize, usize) = (cp.values().sum(), cr.values().sum());
    if tp == 0 || tr == 0 {
        return 0.0;
    }
    let overlap: usize = cp.iter().map(|(g, c)| (*c).min(*cr.get(g).unwrap_or(&0))).sum();
    harmonic(overlap as f64 / tp as f64, overlap as f64 / tr as f64)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence.
pub fn rouge_l(pred: &str, reference: &str) -> f64 {
    let (p, r) = (tokenize(pred), tokenize(reference));
    if p.is_empty() || r.is_empty() {
        return 0.0;
    }
    let l = lcs_len(&p, &r) as f64;
    harmonic(l / p.len() as f64, l / r.len() as f64)
}

struct ChunkSearch<'a> {
    pred: &'a [String],
    positions: HashMap<&'a str, Vec<usize>>,
    quota: HashMap<&'a str, usize>,
    remaining_in_pred: Vec<usize>,
    used: Vec<bool>,
    best: usize,
    budget: usize,
}

impl ChunkSearch<'_> {
    fn run(&mut self, i: usize, prev: Option<usize>, chunks: usize) {
        if chunks >= self.best || self.budget == 0 {
            return;
        }
        self.budget -= 1;
        if i == self.pred.len() {
            self.best = chunks;
            return;
        }
        let w = self.pred[i].as_str();
        let need = self.quota.get(w).copied().unwrap_or(0);
        if need > 0 {
            let mut cands = self.positions[w].clone();
            // Extending the current chunk first finds good bounds early.
            if let Some(p) = prev {
                if let Some(pos) = cands.iter().position(|&j| j == p + 1) {
                    let j = cands.remove(pos);
                    cands.insert(0, j);
                }
            }
            for j in cands {
                if self.used[j] {
                    continue;
                }
                let extends = j > 0 && prev == Some(j - 1);
                let extra = usize::from(!extends);
                self.used[j] = true;
                *self.quota.get_mut(w).unwrap() -= 1;
                self.run(i + 1, Some(j), chunks + extra);
                *self.quota.get_mut(w).unwrap() += 1;
                self.used[j] = false;
            }
        }
        // Leaving this token unaligned is allowed only if later copies of
        // the word can still fill the quota.
        if self.remaining_in_pred[i] > need {
            self.run(i + 1, None, chunks);
        }
    }
}

/// Minimum chunk count over all maximum exact-match alignments, and the
/// match count.
fn meteor_alignment(pred: &[String], reference: &[String]) -> (usize, usize) {
    let mut positions: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, t) in reference.iter().enumerate() {
        positions.entry(t.as_str()).or_default().push(j);
    }
    let mut pred_counts: HashMap<&str, usize> = HashMap::new();
    for t in pred {
        *pred_counts.entry(t.as_str()).or_insert(0) += 1;
    }
    let quota: HashMap<&str, usize> = pred_counts
        .iter()
        .map(|(w, c)| (*w, (*c).min(positions.get(w).map_or(0, Vec::len))))
        .collect();
    let m: usize = quota.values().sum();
    if m == 0 {
        return (0, 0);
    }
    // remaining_in_pred[i]: occurrences of pred[i]'s word at positions >= i.
    let mut remaining_in_pred = vec![0; pred.len()];
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for i in (0..pred.len()).rev() {
        let c = seen.entry(pred[i].as_str()).or_insert(0);
        *c += 1;
        remaining_in_pred[i] = *c;
    }
    let positions = positions.into_iter().filter(|(w, _)| quota.contains_key(w)).collect();
    let mut search = ChunkSearch {
        pred,
        positions,
        quota,
        remaining_in_pred,
        used: vec![false; reference.len()],
        best: m + 1,
        budget: METEOR_SEARCH_BUDGET,
    };
    search.run(0, None, 0);
    (m, search.best.min(m))
}

/// METEOR with exact unigram matching only.
pub fn meteor(pred: &str, reference: &str) -> f64 {
    let (p, r) = (tokenize(pred), tokenize(reference));
    if p.is_empty() || r.is_empty() {
        return 0.0;
    }
    let (m, chunks) = meteor_alignment(&p, &r);
    if m == 0 {
        return 0.0;
    }
    let precision = m as f64 / p.len() as f64;
    let recall = m as f64 / r.len() as f64;
    let f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    f_mean * (1.0 - penalty)
}

/// Numeric answers match within `rel_tol`; others match case-insensitively.
pub fn relaxed_accuracy(pred: &str, gold: &str, rel_tol: f64) -> bool {
    match (parse_number(pred.trim()), parse_number(gold.trim())) {
        (Some(p), Some(g)) => within_tolerance(p, g, rel_tol),
        _ => fold(pred) == fold(gold),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, f64>,
    pub count: usize,
    pub config: BTreeMap<String, serde_json::Value>,
}

impl EvalReport {
    pub fn new(
        metrics: BTreeMap<String, f64>,
        count: usize,
        config: BTreeMap<String, serde_json::Value>,
    ) -> Result<Self, EvalError> {
        if count == 0 {
            return Err(EvalError::EmptyInput);
        }
        if let Some((name, _)) = metrics.iter().find(|(_, v)| !v.is_finite()) {
            return Err(EvalError::NonFinite(name.clone()));
        }
        Ok(EvalReport { metrics, count, config })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub prediction: String,
}

/// A query embedding plus the id of its relevant chart (defaults to the
/// query's own id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEmbedding {
    pub id: String,
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_id: Option<String>,
}

pub fn load_predictions(path: &Path) -> Result<BTreeMap<String, String>, EvalError> {
    let preds: Vec<Prediction> = workspace::read_jsonl(path)?;
    Ok(preds.into_iter().map(|p| (p.id, p.prediction)).collect())
}

/// Gold records from an export file. A record's id is its 0-based line index
/// among non-blank lines.
pub fn load_gold(path: &Path) -> Result<Vec<(String, TaskExample)>, EvalError> {
    let gold: Vec<TaskExample> = workspace::read_jsonl(path)?;
    Ok(gold.into_iter().enumerate().map(|(i, g)| (i.to_string(), g)).collect())
}

pub fn load_embeddings(path: &Path) -> Result<Vec<Embedding>, EvalError> {
    Ok(workspace::read_jsonl(path)?)
}

pub fn load_queries(path: &Path) -> Result<Vec<QueryEmbedding>, EvalError> {
    Ok(workspace::read_jsonl(path)?)
}

pub fn load_ranked_lists(path: &Path) -> Result<Vec<RankedList>, EvalError> {
    Ok(workspace::read_jsonl(path)?)
}

/// Text metrics over gold records; missing predictions score as empty text.
pub const TEXT_METRICS: [&str; 4] = ["rouge", "meteor", "table", "accuracy"];

pub fn evaluate_text(
    metric: &str,
    preds: &BTreeMap<String, String>,
    gold: &[(String, TaskExample)],
    rel_tol: f64,
) -> Result<EvalReport, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let pairs: Vec<(&str, &str)> = gold
        .iter()
        .map(|(id, g)| (preds.get(id).map_or("", String::as_str), g.target_text.as_str()))
        .collect();
    let missing = gold.iter().filter(|(id, _)| !preds.contains_key(id)).count();
    let n = pairs.len() as f64;
    let mean = |scores: Vec<f64>| scores.iter().sum::<f64>() / n;
    let mut metrics = BTreeMap::new();
    let mut config = BTreeMap::new();
    match metric {
        "rouge" => {
            let per: Vec<[f64; 3]> = pairs
                .par_iter()
                .map(|(p, g)| [rouge_n(p, g, 1), rouge_n(p, g, 2), rouge_l(p, g)])
                .collect();
            for (i, name) in ["rouge1", "rouge2", "rougeL"].iter().enumerate() {
                metrics.insert(name.to_string(), mean(per.iter().map(|s| s[i]).collect()));
            }
            config.insert("variant".into(), "f1".into());
        }
        "meteor" => {
            let per: Vec<f64> = pairs.par_iter().map(|(p, g)| meteor(p, g)).collect();
            metrics.insert("meteor".into(), mean(per));
            config.insert("matching".into(), "exact".into());
        }
        "table" => {
            let per = pairs
                .par_iter()
                .map(|(p, g)| match table_recall_f1(p, g, rel_tol) {
                    Err(EvalError::ParseError { .. }) if !g.is_empty() => {
                        table_triples(g).map(|_| TableScore { recall: 0.0, precision: 0.0, f1: 0.0 })
                    }
                    other => other,
                })
                .collect::<Result<Vec<_>, _>>()?;
            metrics.insert("recall".into(), mean(per.iter().map(|s| s.recall).collect()));
            metrics.insert("precision".into(), mean(per.iter().map(|s| s.precision).collect()));
            metrics.insert("f1".into(), mean(per.iter().map(|s| s.f1).collect()));
            config.insert("rel_tol".into(), rel_tol.into());
        }
        "accuracy" => {
            let per: Vec<f64> = pairs
                .par_iter()
                .map(|(p, g)| if relaxed_accuracy(p, g, rel_tol) { 100.0 } else { 0.0 })
                .collect();
            metrics.insert("accuracy".into(), mean(per));
            config.insert("rel_tol".into(), rel_tol.into());
        }
        other => return Err(EvalError::UnknownMetric(other.to_string())),
    }
    config.insert("metric".into(), metric.into());
    config.insert("missing_predictions".into(), missing.into());
    EvalReport::new(metrics, pairs.len(), config)
}

/// R@k for each `k`, MRR@10 and NDCG@10 over ranked lists.
pub fn evaluate_retrieval(lists: &[RankedList], ks: &[usize]) -> Result<EvalReport, EvalError> {
    let mut metrics = BTreeMap::new();
    for &k in ks {
        metrics.insert(format!("recall@{k}"), recall_at_k(lists, k)?);
    }
    metrics.insert("mrr@10".into(), mrr_at_10(lists)?);
    metrics.insert("ndcg@10".into(), ndcg_at_10(lists)?);
    let mut config = BTreeMap::new();
    config.insert("k".into(), serde_json::json!(ks));
    config.insert("relevance".into(), "binary-single".into());
    EvalReport::new(metrics, lists.len(), config)
}

/// Ranks every chart for every query (keeping the top `depth`).
pub fn rank_all(
    queries: &[QueryEmbedding],
    charts: &[Embedding],
    depth: usize,
) -> Result<Vec<RankedList>, EvalError> {
    queries
        .par_iter()
        .map(|q| {
            let e = Embedding {
                id: q.id.clone(),
                vector: q.vector.clone(),
            };
            let mut l = rank_charts(&e, charts, depth)?;
            if let Some(r) = &q.relevant_id {
                l.relevant_id = r.clone();
            }
            Ok(l)
        })
        .collect()
}
