//! Rule-based visualization recommendation.
//!
//! A clean table is expanded into every (x, y[, series]) combination the
//! compatibility matrix allows, each candidate gets an additive score, and
//! the best few survive as the table's charts.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{CleanColumn, CleanTable, ColumnKind};

pub const PIE_MAX_SLICES: usize = 12;
pub const SERIES_MAX_DISTINCT: usize = 8;
pub const HEATMAP_MAX_DISTINCT: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecommendError {
    #[error("no compatible chart for table `{0}`")]
    NoCandidates(String),
    #[error("spec `{spec_id}` references missing field `{field}`")]
    UnknownField { spec_id: String, field: String },
    #[error("spec `{spec_id}` violates the compatibility matrix: {reason}")]
    Incompatible { spec_id: String, reason: String },
}

/// The eleven chart types, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartType {
    Bar,
    GroupedBar,
    StackedBar,
    Line,
    Area,
    Scatter,
    Bubble,
    Pie,
    Histogram,
    Box,
    Heatmap,
}

impl ChartType {
    pub const ALL: [ChartType; 11] = [
        ChartType::Bar,
        ChartType::GroupedBar,
        ChartType::StackedBar,
        ChartType::Line,
        ChartType::Area,
        ChartType::Scatter,
        ChartType::Bubble,
        ChartType::Pie,
        ChartType::Histogram,
        ChartType::Box,
        ChartType::Heatmap,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChartType::Bar => "bar",
            ChartType::GroupedBar => "grouped_bar",
            ChartType::StackedBar => "stacked_bar",
            ChartType::Line => "line",
            ChartType::Area => "area",
            ChartType::Scatter => "scatter",
            ChartType::Bubble => "bubble",
            ChartType::Pie => "pie",
            ChartType::Histogram => "histogram",
            ChartType::Box => "box",
            ChartType::Heatmap => "heatmap",
        }
    }

    /// Human-readable name used in captions and prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            ChartType::Bar => "bar",
            ChartType::GroupedBar => "grouped bar",
            ChartType::StackedBar => "stacked bar",
            ChartType::Line => "line",
            ChartType::Area => "area",
            ChartType::Scatter => "scatter",
            ChartType::Bubble => "bubble",
            ChartType::Pie => "pie",
            ChartType::Histogram => "histogram",
            ChartType::Box => "box plot",
            ChartType::Heatmap => "heatmap",
        }
    }

    /// Default mark flags for the type.
    pub fn mark_flags(self) -> MarkFlags {
        MarkFlags {
            filled: self == ChartType::Area,
            stacked: self == ChartType::StackedBar,
            smooth: false,
        }
    }

    pub fn has_series(self) -> bool {
        matches!(self, ChartType::GroupedBar | ChartType::StackedBar)
    }
}

impl fmt::Display for ChartType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ChartType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChartType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown chart type `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    None,
    Sum,
    Mean,
    Count,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldEncoding {
    pub field: String,
    pub kind: ColumnKind,
    pub aggregate: Aggregate,
}

impl FieldEncoding {
    fn plain(col: &CleanColumn) -> Self {
        FieldEncoding {
            field: col.name().to_string(),
            kind: col.kind(),
            aggregate: Aggregate::None,
        }
    }

    fn aggregated(col: &CleanColumn, aggregate: Aggregate) -> Self {
        FieldEncoding {
            aggregate,
            ..FieldEncoding::plain(col)
        }
    }

    /// "total sales", "average sales", "count of sales" or just "sales".
    pub fn describe(&self) -> String {
        match self.aggregate {
            Aggregate::None => self.field.clone(),
            Aggregate::Sum => format!("total {}", self.field),
            Aggregate::Mean => format!("average {}", self.field),
            Aggregate::Count => format!("count of {}", self.field),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarkFlags {
    pub filled: bool,
    pub stacked: bool,
    pub smooth: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisLabels {
    pub x: String,
    pub y: String,
}

/// Visualization intermediate representation.
///
/// Type-specific encoding layout:
/// - histogram: x is the binned field, y is `[field (count)]`;
/// - box: x and y are the same field;
/// - bubble: y is `[y, size]`;
/// - heatmap: y is `[second categorical axis, aggregated value]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub spec_id: String,
    pub source_id: String,
    pub chart_type: ChartType,
    pub x_encoding: FieldEncoding,
    pub y_encodings: Vec<FieldEncoding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_field: Option<String>,
    pub mark_flags: MarkFlags,
    pub title: String,
    pub axis_labels: AxisLabels,
}

impl ChartSpec {
    /// Field names in encoding order: x, y..., series.
    pub fn fields(&self) -> Vec<&str> {
        let mut out = vec![self.x_encoding.field.as_str()];
        out.extend(self.y_encodings.iter().map(|e| e.field.as_str()));
        if let Some(s) = &self.series_field {
            out.push(s);
        }
        out
    }

    pub fn distinct_fields(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.fields().into_iter().filter(|f| seen.insert(*f)).collect()
    }

    /// Encodings whose values the chart plots as numbers.
    pub fn value_encodings(&self) -> Vec<&FieldEncoding> {
        self.y_encodings
            .iter()
            .filter(|e| e.kind == ColumnKind::Numeric)
            .collect()
    }

    fn dedup_key(&self) -> (ChartType, String, Vec<String>, Option<String>) {
        (
            self.chart_type,
            self.x_encoding.field.clone(),
            self.y_encodings.iter().map(|e| e.field.clone()).collect(),
            self.series_field.clone(),
        )
    }

    fn sort_fields(&self) -> Vec<String> {
        self.fields().into_iter().map(str::to_string).collect()
    }

    /// Field existence and compatibility-matrix check against the source table.
    pub fn validate(&self, table: &CleanTable) -> Result<(), RecommendError> {
        for f in self.fields() {
            if table.column(f).is_none() {
                return Err(RecommendError::UnknownField {
                    spec_id: self.spec_id.clone(),
                    field: f.to_string(),
                });
            }
        }
        let facts = TableFacts::new(table);
        let reason = compatibility_violation(self, &facts);
        match reason {
            None => Ok(()),
            Some(reason) => Err(RecommendError::Incompatible {
                spec_id: self.spec_id.clone(),
                reason,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommendConfig {
    pub max_candidates_per_table: usize,
    pub max_specs_per_table: usize,
    pub min_specs_per_table: usize,
    /// Candidates scoring below this are kept only to reach the minimum count.
    pub min_score: f64,
    pub enabled_types: Vec<ChartType>,
    /// Emit line charts with the smooth mark flag set.
    pub smooth_lines: bool,
}

impl Default for RecommendConfig {
    fn default() -> Self {
        RecommendConfig {
            max_candidates_per_table: 256,
            max_specs_per_table: 12,
            min_specs_per_table: 2,
            min_score: 0.75,
            enabled_types: ChartType::ALL.to_vec(),
            smooth_lines: false,
        }
    }
}

/// Per-column facts the matrix and rubric need, computed once per table.
struct TableFacts<'a> {
    table: &'a CleanTable,
    ordered: Vec<bool>,
    duplicates: Vec<bool>,
}

impl<'a> TableFacts<'a> {
    fn new(table: &'a CleanTable) -> Self {
        let ordered = table
            .columns
            .iter()
            .map(|c| {
                c.kind() == ColumnKind::Numeric
                    && c.numbers().windows(2).all(|w| w[0] < w[1])
            })
            .collect();
        let duplicates = table
            .columns
            .iter()
            .map(|c| c.profile.distinct_count < table.row_count)
            .collect();
        TableFacts {
            table,
            ordered,
            duplicates,
        }
    }

    fn idx(&self, name: &str) -> Option<usize> {
        self.table.columns.iter().position(|c| c.name() == name)
    }

    fn col(&self, name: &str) -> Option<&'a CleanColumn> {
        self.table.column(name)
    }

    fn is_ordered(&self, name: &str) -> bool {
        self.idx(name).map(|i| self.ordered[i]).unwrap_or(false)
    }

    fn distinct(&self, name: &str) -> usize {
        self.col(name).map(|c| c.profile.distinct_count).unwrap_or(0)
    }

    fn has_duplicate_keys(&self, keys: &[&str]) -> bool {
        let cols: Vec<&CleanColumn> = keys.iter().filter_map(|k| self.col(k)).collect();
        if cols.len() == 1 {
            return self.idx(keys[0]).map(|i| self.duplicates[i]).unwrap_or(false);
        }
        let mut seen = HashSet::new();
        (0..self.table.row_count)
            .any(|r| !seen.insert(cols.iter().map(|c| c.cells[r].as_str()).collect::<Vec<_>>()))
    }

    /// Aggregate for y when grouping by `keys` (x first).
    fn group_aggregate(&self, keys: &[&str]) -> Aggregate {
        if !self.has_duplicate_keys(keys) {
            return Aggregate::None;
        }
        match self.col(keys[0]).map(|c| c.kind()) {
            Some(ColumnKind::Temporal) => Aggregate::Mean,
            _ => Aggregate::Sum,
        }
    }

    fn non_negative_with_mass(&self, name: &str) -> bool {
        let v = self.col(name).map(|c| c.numbers()).unwrap_or_default();
        v.iter().all(|x| *x >= 0.0) && v.iter().any(|x| *x > 0.0)
    }
}

fn kind_of(facts: &TableFacts, name: &str) -> Option<ColumnKind> {
    facts.col(name).map(|c| c.kind())
}

fn compatibility_violation(spec: &ChartSpec, facts: &TableFacts) -> Option<String> {
    use ChartType::*;
    let x = spec.x_encoding.field.as_str();
    let xk = kind_of(facts, x)?;
    let ys: Vec<&str> = spec.y_encodings.iter().map(|e| e.field.as_str()).collect();
    let yk: Vec<ColumnKind> = ys.iter().filter_map(|y| kind_of(facts, y)).collect();
    let numeric = |k: &ColumnKind| *k == ColumnKind::Numeric;
    let expect_y = |n: usize| -> Option<String> {
        (ys.len() != n).then(|| format!("expected {n} y encodings, found {}", ys.len()))
    };
    if spec.chart_type.has_series() != spec.series_field.is_some() {
        return Some("series field presence does not match chart type".into());
    }
    match spec.chart_type {
        Line | Area => expect_y(1).or_else(|| {
            let x_ok = xk == ColumnKind::Temporal || facts.is_ordered(x);
            (!x_ok || !numeric(&yk[0]) || x == ys[0])
                .then(|| "line/area need an ordered x and a numeric y".into())
        }),
        Bar | GroupedBar | StackedBar | Pie => expect_y(1).or_else(|| {
            let x_ok = match spec.chart_type {
                Pie => {
                    xk == ColumnKind::Categorical
                        && (2..=PIE_MAX_SLICES).contains(&facts.distinct(x))
                        && facts.non_negative_with_mass(ys[0])
                }
                _ => matches!(xk, ColumnKind::Categorical | ColumnKind::Temporal),
            };
            if !x_ok || !numeric(&yk[0]) {
                return Some("bar/pie need a categorical x and a numeric y".into());
            }
            if let Some(s) = &spec.series_field {
                let ok = s != x
                    && kind_of(facts, s) == Some(ColumnKind::Categorical)
                    && (2..=SERIES_MAX_DISTINCT).contains(&facts.distinct(s));
                if !ok {
                    return Some(format!(
                        "series field needs 2..={SERIES_MAX_DISTINCT} categories"
                    ));
                }
            }
            None
        }),
        Scatter => expect_y(1).or_else(|| {
            let x_ok = matches!(xk, ColumnKind::Numeric | ColumnKind::Temporal);
            (!x_ok || !numeric(&yk[0]) || x == ys[0])
                .then(|| "scatter needs numeric x and y".into())
        }),
        Bubble => expect_y(2).or_else(|| {
            let all = xk == ColumnKind::Numeric && yk.iter().all(numeric);
            let distinct = x != ys[0] && x != ys[1] && ys[0] != ys[1];
            (!all || !distinct).then(|| "bubble needs three distinct numeric fields".into())
        }),
        Histogram | Box => expect_y(1).or_else(|| {
            (xk != ColumnKind::Numeric || x != ys[0])
                .then(|| "histogram/box need one numeric field".into())
        }),
        Heatmap => expect_y(2).or_else(|| {
            let axes = xk == ColumnKind::Categorical
                && yk[0] == ColumnKind::Categorical
                && x != ys[0]
                && (2..=HEATMAP_MAX_DISTINCT).contains(&facts.distinct(x))
                && (2..=HEATMAP_MAX_DISTINCT).contains(&facts.distinct(ys[0]));
            (!axes || !numeric(&yk[1]))
                .then(|| "heatmap needs two small categorical axes and a numeric value".into())
        }),
    }
}

pub fn spec_id(source_id: &str, chart_type: ChartType, fields: &[&str]) -> String {
    let mut h = Sha256::new();
    h.update(source_id.as_bytes());
    h.update([0]);
    h.update(chart_type.as_str().as_bytes());
    for f in fields {
        h.update([0]);
        h.update(f.as_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

struct SpecBuilder<'a> {
    source_id: &'a str,
    smooth_lines: bool,
}

impl SpecBuilder<'_> {
    fn build(
        &self,
        chart_type: ChartType,
        x: FieldEncoding,
        y: Vec<FieldEncoding>,
        series: Option<&str>,
    ) -> ChartSpec {
        let (title, axis_labels) = titles(chart_type, &x, &y, series);
        let mut mark_flags = chart_type.mark_flags();
        mark_flags.smooth = self.smooth_lines && chart_type == ChartType::Line;
        let mut spec = ChartSpec {
            spec_id: String::new(),
            source_id: self.source_id.to_string(),
            chart_type,
            x_encoding: x,
            y_encodings: y,
            series_field: series.map(str::to_string),
            mark_flags,
            title,
            axis_labels,
        };
        spec.spec_id = spec_id(self.source_id, chart_type, &spec.fields());
        spec
    }
}

fn titles(
    chart_type: ChartType,
    x: &FieldEncoding,
    y: &[FieldEncoding],
    series: Option<&str>,
) -> (String, AxisLabels) {
    use ChartType::*;
    let labels = |x: &str, y: &str| AxisLabels {
        x: x.to_string(),
        y: y.to_string(),
    };
    match chart_type {
        Histogram => (
            format!("Distribution of {}", x.field),
            labels(&x.field, "count"),
        ),
        Box => (format!("Spread of {}", x.field), labels("", &x.field)),
        Scatter => (
            format!("{} vs {}", y[0].field, x.field),
            labels(&x.field, &y[0].field),
        ),
        Bubble => (
            format!("{} vs {} sized by {}", y[0].field, x.field, y[1].field),
            labels(&x.field, &y[0].field),
        ),
        Heatmap => (
            format!("{} by {} and {}", capitalize(&y[1].describe()), x.field, y[0].field),
            labels(&x.field, &y[0].field),
        ),
        Pie => (
            format!("Share of {} by {}", y[0].describe(), x.field),
            labels(&x.field, &y[0].describe()),
        ),
        _ => {
            let mut t = format!("{} by {}", capitalize(&y[0].describe()), x.field);
            if let Some(s) = series {
                t.push_str(&format!(" and {s}"));
            }
            (t, labels(&x.field, &y[0].describe()))
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Every compatible candidate, in deterministic enumeration order, capped
/// at `config.max_candidates_per_table`.
pub fn enumerate_candidates(
    table: &CleanTable,
    config: &RecommendConfig,
) -> Result<Vec<ChartSpec>, RecommendError> {
    use ChartType::*;
    let facts = TableFacts::new(table);
    let b = SpecBuilder {
        source_id: &table.source_id,
        smooth_lines: config.smooth_lines,
    };
    let enabled: HashSet<ChartType> = config.enabled_types.iter().copied().collect();
    let by_kind = |k: ColumnKind| -> Vec<&CleanColumn> {
        table.columns.iter().filter(|c| c.kind() == k).collect()
    };
    let numeric = by_kind(ColumnKind::Numeric);
    let temporal = by_kind(ColumnKind::Temporal);
    let categorical = by_kind(ColumnKind::Categorical);
    let ordered_x: Vec<&CleanColumn> = table
        .columns
        .iter()
        .filter(|c| c.kind() == ColumnKind::Temporal || facts.is_ordered(c.name()))
        .collect();
    let bar_x: Vec<&CleanColumn> = categorical.iter().chain(&temporal).copied().collect();

    let mut out = Vec::new();
    for x in &bar_x {
        for y in &numeric {
            let agg = facts.group_aggregate(&[x.name()]);
            out.push(b.build(Bar, FieldEncoding::plain(x), vec![FieldEncoding::aggregated(y, agg)], None));
        }
    }
    for stacked in [false, true] {
        let ty = if stacked { StackedBar } else { GroupedBar };
        for x in &bar_x {
            for s in &categorical {
                for y in &numeric {
                    let agg = facts.group_aggregate(&[x.name(), s.name()]);
                    out.push(b.build(
                        ty,
                        FieldEncoding::plain(x),
                        vec![FieldEncoding::aggregated(y, agg)],
                        Some(s.name()),
                    ));
                }
            }
        }
    }
    for ty in [Line, Area] {
        for x in &ordered_x {
            for y in &numeric {
                let agg = facts.group_aggregate(&[x.name()]);
                out.push(b.build(ty, FieldEncoding::plain(x), vec![FieldEncoding::aggregated(y, agg)], None));
            }
        }
    }
    for x in temporal.iter().chain(&numeric) {
        for y in &numeric {
            let x_pos = facts.idx(x.name());
            if x.kind() == ColumnKind::Numeric && x_pos >= facts.idx(y.name()) {
                continue;
            }
            out.push(b.build(Scatter, FieldEncoding::plain(x), vec![FieldEncoding::plain(y)], None));
        }
    }
    for (i, x) in numeric.iter().enumerate() {
        for (j, y) in numeric.iter().enumerate().skip(i + 1) {
            for size in numeric.iter().skip(j + 1) {
                out.push(b.build(
                    Bubble,
                    FieldEncoding::plain(x),
                    vec![FieldEncoding::plain(y), FieldEncoding::plain(size)],
                    None,
                ));
            }
        }
    }
    for x in &categorical {
        for y in &numeric {
            let agg = facts.group_aggregate(&[x.name()]);
            out.push(b.build(Pie, FieldEncoding::plain(x), vec![FieldEncoding::aggregated(y, agg)], None));
        }
    }
    for f in &numeric {
        out.push(b.build(
            Histogram,
            FieldEncoding::plain(f),
            vec![FieldEncoding::aggregated(f, Aggregate::Count)],
            None,
        ));
    }
    for f in &numeric {
        out.push(b.build(Box, FieldEncoding::plain(f), vec![FieldEncoding::plain(f)], None));
    }
    for (i, x) in categorical.iter().enumerate() {
        for y in categorical.iter().skip(i + 1) {
            for v in &numeric {
                let agg = facts.group_aggregate(&[x.name(), y.name()]);
                out.push(b.build(
                    Heatmap,
                    FieldEncoding::plain(x),
                    vec![FieldEncoding::plain(y), FieldEncoding::aggregated(v, agg)],
                    None,
                ));
            }
        }
    }

    out.retain(|s| enabled.contains(&s.chart_type) && compatibility_violation(s, &facts).is_none());
    out.truncate(config.max_candidates_per_table);
    if out.is_empty() {
        return Err(RecommendError::NoCandidates(table.source_id.clone()));
    }
    Ok(out)
}

fn category_fitness(distinct: usize) -> f64 {
    let c = distinct as f64;
    if c < 4.0 {
        ((c - 1.0) / 3.0).max(0.0)
    } else if c <= 20.0 {
        1.0
    } else {
        (1.0 - (c - 20.0) / 20.0).max(0.0)
    }
}

fn legend_fitness(distinct: usize) -> f64 {
    let l = distinct as f64;
    if l <= 8.0 {
        1.0
    } else {
        (1.0 - (l - 8.0) / 8.0).max(0.0)
    }
}

fn affinity(spec: &ChartSpec) -> f64 {
    let y_numeric = spec
        .y_encodings
        .first()
        .map(|e| e.kind == ColumnKind::Numeric)
        .unwrap_or(false);
    match (spec.chart_type, spec.x_encoding.kind) {
        (ChartType::Line, ColumnKind::Temporal) => 0.4,
        (ChartType::Bar, ColumnKind::Categorical) => 0.4,
        (ChartType::Scatter, ColumnKind::Numeric) if y_numeric => 0.35,
        _ => 0.25,
    }
}

fn sample_variance_nonzero(values: &[f64]) -> bool {
    values.windows(2).any(|w| w[0] != w[1])
}

/// Additive rubric in [0, 1]: kind affinity (≤0.4), cardinality fitness
/// (0.3), column coverage (0.2) and non-constant values (0.1).
pub fn score_spec(spec: &ChartSpec, table: &CleanTable) -> f64 {
    let facts = TableFacts::new(table);
    let mut cardinality = 1.0;
    if spec.x_encoding.kind == ColumnKind::Categorical {
        cardinality *= category_fitness(facts.distinct(&spec.x_encoding.field));
    }
    if spec.chart_type == ChartType::Heatmap {
        cardinality *= category_fitness(facts.distinct(&spec.y_encodings[0].field));
    }
    if let Some(s) = &spec.series_field {
        cardinality *= legend_fitness(facts.distinct(s));
    }
    let coverage = spec.distinct_fields().len() as f64 / table.columns.len().max(1) as f64;
    let varies = spec
        .value_encodings()
        .first()
        .and_then(|e| facts.col(&e.field))
        .map(|c| sample_variance_nonzero(&c.numbers()))
        .unwrap_or(false);
    let score = affinity(spec)
        + 0.3 * cardinality
        + 0.2 * coverage.min(1.0)
        + if varies { 0.1 } else { 0.0 };
    // Snap to a 1e-9 grid so threshold comparisons ignore summation error.
    (score.clamp(0.0, 1.0) * 1e9).round() / 1e9
}

/// Scored, deduplicated and ranked specs for one table.
pub fn recommend_scored(
    table: &CleanTable,
    config: &RecommendConfig,
) -> Result<Vec<(ChartSpec, f64)>, RecommendError> {
    let candidates = enumerate_candidates(table, config)?;
    let mut seen = HashSet::new();
    let mut scored: Vec<(ChartSpec, f64)> = candidates
        .into_iter()
        .filter(|s| seen.insert(s.dedup_key()))
        .map(|s| {
            let score = score_spec(&s, table);
            (s, score)
        })
        .collect();
    scored.sort_by(|(a, sa), (b, sb)| {
        sb.total_cmp(sa)
            .then(a.chart_type.cmp(&b.chart_type))
            .then_with(|| a.sort_fields().cmp(&b.sort_fields()))
    });

    let max = config.max_specs_per_table.max(1);
    let floor = config.min_specs_per_table.min(max);
    let above = scored.iter().filter(|(_, s)| *s >= config.min_score).count();
    scored.truncate(above.max(floor).min(max));
    Ok(scored)
}

pub fn recommend(table: &CleanTable, config: &RecommendConfig) -> Result<Vec<ChartSpec>, RecommendError> {
    Ok(recommend_scored(table, config)?
        .into_iter()
        .map(|(s, _)| s)
        .collect())
}
