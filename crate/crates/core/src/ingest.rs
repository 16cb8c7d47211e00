//! CSV parsing, column profiling and table cleaning.
//!
//! Cleaning applies three rules in order: rows holding a missing cell are
//! dropped, columns whose value sequence repeats an earlier column are
//! dropped, and tables left without a numeric column are rejected. A cell
//! that does not parse under its column's inferred kind counts as missing.

use std::collections::HashSet;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of non-missing cells that must parse for a column to take a kind.
pub const KIND_THRESHOLD: f64 = 0.95;

const MISSING_TOKENS: &[&str] = &["na", "n/a", "nan", "null", "none"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("empty input: no header row")]
    EmptyInput,
    #[error("ragged row at line {line}: expected {expected} cells, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("invalid UTF-8 at byte {offset}")]
    EncodingError { offset: usize },
    #[error("malformed CSV: {0}")]
    Malformed(String),
    #[error("table holds only textual columns")]
    TextOnly,
    #[error("only {rows} row(s) survive cleaning, need at least 2")]
    TooFewRows { rows: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    pub source_id: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Temporal,
    Categorical,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Temporal => "temporal",
            ColumnKind::Categorical => "categorical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub name: String,
    pub kind: ColumnKind,
    pub distinct_count: usize,
    pub missing_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanColumn {
    pub profile: ColumnProfile,
    pub cells: Vec<String>,
}

impl CleanColumn {
    pub fn name(&self) -> &str {
        &self.profile.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.profile.kind
    }

    /// Parsed values of a numeric column. Cells that do not parse (never the
    /// case after cleaning) come back as NaN.
    pub fn numbers(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| parse_number(c).unwrap_or(f64::NAN))
            .collect()
    }

    /// Day-number sort keys of a temporal column.
    pub fn temporal_keys(&self) -> Vec<i64> {
        self.cells
            .iter()
            .map(|c| parse_temporal(c, true).unwrap_or(i64::MIN))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningLog {
    /// 1-based data-row numbers of the input table.
    pub rows_dropped: Vec<usize>,
    pub columns_deduped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanTable {
    pub source_id: String,
    pub columns: Vec<CleanColumn>,
    pub row_count: usize,
    pub cleaning_log: CleaningLog,
}

impl CleanTable {
    pub fn column(&self, name: &str) -> Option<&CleanColumn> {
        self.columns.iter().find(|c| c.profile.name == name)
    }

    pub fn profiles(&self) -> Vec<ColumnProfile> {
        self.columns.iter().map(|c| c.profile.clone()).collect()
    }

    pub fn to_raw(&self) -> RawTable {
        RawTable {
            source_id: self.source_id.clone(),
            header: self.columns.iter().map(|c| c.profile.name.clone()).collect(),
            rows: (0..self.row_count)
                .map(|r| self.columns.iter().map(|c| c.cells[r].clone()).collect())
                .collect(),
        }
    }
}

/// Parses RFC-4180 CSV text whose first record is the header.
///
/// Cells are trimmed. Blank header names become `column_<n>`; repeated names
/// get an ordinal suffix (`name_2`, `name_3`, ...).
pub fn parse_csv(source_id: &str, bytes: &[u8]) -> Result<RawTable, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| IngestError::EncodingError {
        offset: e.valid_up_to(),
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut records = reader.records();
    let header_rec = match records.next() {
        None => return Err(IngestError::EmptyInput),
        Some(r) => r.map_err(|e| IngestError::Malformed(e.to_string()))?,
    };
    if header_rec.iter().all(|c| c.trim().is_empty()) {
        return Err(IngestError::EmptyInput);
    }
    let header = unique_header(header_rec.iter().map(str::trim));

    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| IngestError::Malformed(e.to_string()))?;
        if rec.len() != header.len() {
            return Err(IngestError::RaggedRow {
                line: rec.position().map(|p| p.line()).unwrap_or(0),
                expected: header.len(),
                found: rec.len(),
            });
        }
        rows.push(rec.iter().map(|c| c.trim().to_string()).collect());
    }
    Ok(RawTable {
        source_id: source_id.to_string(),
        header,
        rows,
    })
}

fn unique_header<'a>(names: impl Iterator<Item = &'a str>) -> Vec<String> {
    let names: Vec<String> = names
        .enumerate()
        .map(|(i, n)| {
            if n.is_empty() {
                format!("column_{}", i + 1)
            } else {
                n.to_string()
            }
        })
        .collect();
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::with_capacity(names.len());
    for name in &names {
        let mut candidate = name.clone();
        let mut ordinal = 2;
        while seen.contains(&candidate) || (candidate != *name && names.contains(&candidate)) {
            candidate = format!("{name}_{ordinal}");
            ordinal += 1;
        }
        seen.insert(candidate.clone());
        out.push(candidate);
    }
    out
}

pub fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || MISSING_TOKENS.iter().any(|m| t.eq_ignore_ascii_case(m))
}

/// Lenient real-number parser: optional sign, `,` thousands grouping,
/// decimal point, exponent, and a trailing `%` meaning value/100.
pub fn parse_number(cell: &str) -> Option<f64> {
    let mut s = cell.trim();
    let mut scale = 1.0;
    if let Some(rest) = s.strip_suffix('%') {
        s = rest.trim_end();
        scale = 0.01;
    }
    if s.is_empty() || !s.chars().all(|c| c.is_ascii_digit() || ".,+-eE".contains(c)) {
        return None;
    }
    if !s.chars().any(|c| c.is_ascii_digit()) {
        return None;
    }
    let cleaned;
    if s.contains(',') {
        if !valid_grouping(s) {
            return None;
        }
        cleaned = s.replace(',', "");
        s = &cleaned;
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite()).map(|v| v * scale)
}

fn valid_grouping(s: &str) -> bool {
    let unsigned = s.trim_start_matches(['+', '-']);
    let int_part = unsigned
        .split(['.', 'e', 'E'])
        .next()
        .unwrap_or_default();
    if int_part.len() != unsigned.len() && unsigned[int_part.len()..].contains(',') {
        return false;
    }
    let groups: Vec<&str> = int_part.split(',').collect();
    let first = groups[0];
    !first.is_empty()
        && first.len() <= 3
        && groups[1..].iter().all(|g| g.len() == 3)
        && groups.iter().all(|g| g.chars().all(|c| c.is_ascii_digit()))
}

/// Parses the accepted date forms into a day-number sort key:
/// `YYYY-MM-DD`, `YYYY/MM/DD`, `MM/DD/YYYY`, `YYYY-MM`, and, when
/// `allow_bare_year` is set, a bare year in 1000..=2999.
pub fn parse_temporal(cell: &str, allow_bare_year: bool) -> Option<i64> {
    let s = cell.trim();
    let date = if s.len() == 4 && s.bytes().all(|b| b.is_ascii_digit()) {
        if !allow_bare_year {
            return None;
        }
        let y: i32 = s.parse().ok()?;
        if !(1000..=2999).contains(&y) {
            return None;
        }
        NaiveDate::from_ymd_opt(y, 1, 1)
    } else {
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .or_else(|_| NaiveDate::parse_from_str(s, "%Y/%m/%d"))
            .or_else(|_| NaiveDate::parse_from_str(s, "%m/%d/%Y"))
            .ok()
            .filter(|_| strict_date_shape(s))
            .or_else(|| parse_year_month(s))
    }?;
    Some(i64::from(date.num_days_from_ce()))
}

// chrono accepts unpadded or 5-digit years; keep the accepted shapes tight.
fn strict_date_shape(s: &str) -> bool {
    let b = s.as_bytes();
    match b.len() {
        10 => {
            (b[4] == b'-' && b[7] == b'-')
                || (b[4] == b'/' && b[7] == b'/')
                || (b[2] == b'/' && b[5] == b'/')
        }
        _ => false,
    }
}

fn parse_year_month(s: &str) -> Option<NaiveDate> {
    let b = s.as_bytes();
    if b.len() != 7 || b[4] != b'-' {
        return None;
    }
    let y: i32 = s[..4].parse().ok()?;
    let m: u32 = s[5..].parse().ok()?;
    NaiveDate::from_ymd_opt(y, m, 1)
}

fn bare_year_allowed(column_name: &str) -> bool {
    column_name.to_ascii_lowercase().contains("year")
}

fn infer_kind(name: &str, cells: &[&str]) -> ColumnKind {
    let present: Vec<&str> = cells.iter().copied().filter(|c| !is_missing(c)).collect();
    if present.is_empty() {
        return ColumnKind::Categorical;
    }
    let need = KIND_THRESHOLD * present.len() as f64;
    let years = bare_year_allowed(name);
    let temporal = present
        .iter()
        .filter(|c| parse_temporal(c, years).is_some())
        .count();
    if temporal as f64 >= need {
        return ColumnKind::Temporal;
    }
    let numeric = present.iter().filter(|c| parse_number(c).is_some()).count();
    if numeric as f64 >= need {
        return ColumnKind::Numeric;
    }
    ColumnKind::Categorical
}

fn profile_column(name: &str, cells: &[&str]) -> ColumnProfile {
    let kind = infer_kind(name, cells);
    let mut distinct = HashSet::new();
    let mut missing = 0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for c in cells {
        if is_missing(c) {
            missing += 1;
            continue;
        }
        distinct.insert(*c);
        if kind == ColumnKind::Numeric {
            if let Some(v) = parse_number(c) {
                min = min.min(v);
                max = max.max(v);
            }
        }
    }
    let has_range = kind == ColumnKind::Numeric && min <= max;
    ColumnProfile {
        name: name.to_string(),
        kind,
        distinct_count: distinct.len(),
        missing_count: missing,
        numeric_min: has_range.then_some(min),
        numeric_max: has_range.then_some(max),
    }
}

pub fn profile_columns(table: &RawTable) -> Vec<ColumnProfile> {
    table
        .header
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let cells: Vec<&str> = table.rows.iter().map(|r| r[i].as_str()).collect();
            profile_column(name, &cells)
        })
        .collect()
}

fn cell_fits(cell: &str, profile: &ColumnProfile) -> bool {
    if is_missing(cell) {
        return false;
    }
    match profile.kind {
        ColumnKind::Numeric => parse_number(cell).is_some(),
        ColumnKind::Temporal => parse_temporal(cell, bare_year_allowed(&profile.name)).is_some(),
        ColumnKind::Categorical => true,
    }
}

pub fn clean_table(table: &RawTable) -> Result<CleanTable, IngestError> {
    // (original 1-based row number, cells)
    let mut rows: Vec<(usize, &Vec<String>)> =
        table.rows.iter().enumerate().map(|(i, r)| (i + 1, r)).collect();
    let mut dropped = Vec::new();

    // Dropping rows can move a column across the kind threshold, so iterate
    // until every surviving cell fits its column's kind.
    loop {
        let view = RawView { header: &table.header, rows: &rows };
        let profiles = view.profiles();
        let before = rows.len();
        rows.retain(|(n, r)| {
            let keep = r.iter().zip(&profiles).all(|(c, p)| cell_fits(c, p));
            if !keep {
                dropped.push(*n);
            }
            keep
        });
        if rows.len() == before {
            break;
        }
    }
    dropped.sort_unstable();

    let mut kept: Vec<usize> = Vec::new();
    let mut deduped = Vec::new();
    for col in 0..table.header.len() {
        let duplicate = kept
            .iter()
            .any(|&k| rows.iter().all(|(_, r)| r[k] == r[col]));
        if duplicate {
            deduped.push(table.header[col].clone());
        } else {
            kept.push(col);
        }
    }

    if rows.len() < 2 {
        return Err(IngestError::TooFewRows { rows: rows.len() });
    }
    let columns: Vec<CleanColumn> = kept
        .iter()
        .map(|&col| {
            let cells: Vec<&str> = rows.iter().map(|(_, r)| r[col].as_str()).collect();
            CleanColumn {
                profile: profile_column(&table.header[col], &cells),
                cells: cells.into_iter().map(str::to_string).collect(),
            }
        })
        .collect();
    if !columns.iter().any(|c| c.kind() == ColumnKind::Numeric) {
        return Err(IngestError::TextOnly);
    }
    Ok(CleanTable {
        source_id: table.source_id.clone(),
        columns,
        row_count: rows.len(),
        cleaning_log: CleaningLog {
            rows_dropped: dropped,
            columns_deduped: deduped,
        },
    })
}

struct RawView<'a> {
    header: &'a [String],
    rows: &'a [(usize, &'a Vec<String>)],
}

impl RawView<'_> {
    fn profiles(&self) -> Vec<ColumnProfile> {
        self.header
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let cells: Vec<&str> = self.rows.iter().map(|(_, r)| r[i].as_str()).collect();
                profile_column(name, &cells)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(header: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable {
            source_id: "t".into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    #[test]
    fn parses_simple_csv() {
        let t = parse_csv("s", b"a,b\n1,2\n3,4\n").unwrap();
        assert_eq!(t.header, vec!["a", "b"]);
        assert_eq!(t.rows.len(), 2);
    }

    #[test]
    fn quoted_cells_keep_embedded_commas() {
        let t = parse_csv("s", b"name,value\n\"Smith, J\",\"1,200\"\n").unwrap();
        assert_eq!(t.rows[0], vec!["Smith, J", "1,200"]);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse_csv("s", b""), Err(IngestError::EmptyInput));
        assert!(matches!(
            parse_csv("s", b"a,b\n1\n"),
            Err(IngestError::RaggedRow { expected: 2, found: 1, .. })
        ));
        assert!(matches!(
            parse_csv("s", b"a,b\n\xff,1\n"),
            Err(IngestError::EncodingError { offset: 4 })
        ));
    }

    #[test]
    fn header_names_are_made_unique() {
        let t = parse_csv("s", b"a,a,,a_2\n1,2,3,4\n").unwrap();
        assert_eq!(t.header, vec!["a", "a_3", "column_3", "a_2"]);
    }

    #[test]
    fn number_forms() {
        assert_eq!(parse_number("-1,234.5"), Some(-1234.5));
        assert_eq!(parse_number("+2e3"), Some(2000.0));
        assert_eq!(parse_number("12.5%"), Some(0.125));
        assert_eq!(parse_number("1,2"), None);
        assert_eq!(parse_number("inf"), None);
        assert_eq!(parse_number("NaN"), None);
        assert_eq!(parse_number("abc"), None);
        assert_eq!(parse_number("-"), None);
    }

    #[test]
    fn temporal_forms() {
        assert!(parse_temporal("2021-01-31", false).is_some());
        assert!(parse_temporal("2021/01/31", false).is_some());
        assert!(parse_temporal("01/31/2021", false).is_some());
        assert!(parse_temporal("2021-07", false).is_some());
        assert!(parse_temporal("2021", false).is_none());
        assert!(parse_temporal("2021", true).is_some());
        assert!(parse_temporal("3021", true).is_none());
        assert!(parse_temporal("2021-13", false).is_none());
        assert!(parse_temporal("2021-1-5", false).is_none());
        assert!(parse_temporal("2021-Q1", false).is_none());
    }

    #[test]
    fn profile_examples() {
        let t = raw(&["n", "d", "c"], &[&["1", "2021-01-01", "x"], &["2", "2021-02-01", "y"], &["3", "2021-03-01", "x"], &["3", "2021-04-01", ""]]);
        let p = profile_columns(&t);
        assert_eq!(p[0].kind, ColumnKind::Numeric);
        assert_eq!(p[0].distinct_count, 3);
        assert_eq!(p[0].missing_count, 0);
        assert_eq!((p[0].numeric_min, p[0].numeric_max), (Some(1.0), Some(3.0)));
        assert_eq!(p[1].kind, ColumnKind::Temporal);
        assert_eq!(p[2].kind, ColumnKind::Categorical);
        assert_eq!(p[2].distinct_count, 2);
        assert_eq!(p[2].missing_count, 1);
    }

    #[test]
    fn year_columns_need_a_year_header() {
        let t = raw(&["year", "price"], &[&["1999", "1999"], &["2000", "2500"]]);
        let p = profile_columns(&t);
        assert_eq!(p[0].kind, ColumnKind::Temporal);
        assert_eq!(p[1].kind, ColumnKind::Numeric);
    }

    #[test]
    fn kind_threshold_tolerates_noise() {
        let mut cells: Vec<String> = (0..19).map(|i| i.to_string()).collect();
        cells.push("oops".into());
        let t = RawTable {
            source_id: "t".into(),
            header: vec!["v".into()],
            rows: cells.iter().map(|c| vec![c.clone()]).collect(),
        };
        assert_eq!(profile_columns(&t)[0].kind, ColumnKind::Numeric);
        let clean = clean_table(&t).unwrap();
        assert_eq!(clean.row_count, 19);
        assert_eq!(clean.cleaning_log.rows_dropped, vec![20]);
    }

    #[test]
    fn drops_rows_with_missing_cells() {
        let t = raw(&["a", "b"], &[&["1", "x"], &["2", "y"], &["", "z"], &["4", "w"], &["5", "v"]]);
        let c = clean_table(&t).unwrap();
        assert_eq!(c.row_count, 4);
        assert_eq!(c.cleaning_log.rows_dropped, vec![3]);
        assert_eq!(c.columns[0].cells, vec!["1", "2", "4", "5"]);
    }

    #[test]
    fn drops_duplicate_columns_keeping_leftmost() {
        let t = raw(&["a", "b", "c"], &[&["1", "5", "5"], &["2", "6", "6"]]);
        let c = clean_table(&t).unwrap();
        let names: Vec<&str> = c.columns.iter().map(|c| c.name()).collect();
        assert_eq!(names, vec!["a", "b"]);
        assert_eq!(c.cleaning_log.columns_deduped, vec!["c"]);
    }

    #[test]
    fn rejects_text_only_and_short_tables() {
        let t = raw(&["a", "b"], &[&["x", "p"], &["y", "q"], &["z", "r"]]);
        assert_eq!(clean_table(&t), Err(IngestError::TextOnly));
        let t = raw(&["a"], &[&["1"], &[""]]);
        assert_eq!(clean_table(&t), Err(IngestError::TooFewRows { rows: 1 }));
    }

    fn arb_table() -> impl Strategy<Value = RawTable> {
        let cell = prop_oneof![
            3 => (0i32..50).prop_map(|v| v.to_string()),
            1 => prop::sample::select(vec!["", "a", "b", "NA", "c"]).prop_map(str::to_string),
        ];
        (1usize..5, 0usize..12).prop_flat_map(move |(cols, rows)| {
            prop::collection::vec(prop::collection::vec(cell.clone(), cols), rows).prop_map(
                move |rows| RawTable {
                    source_id: "p".into(),
                    header: (0..cols).map(|i| format!("c{i}")).collect(),
                    rows,
                },
            )
        })
    }

    proptest! {
        #[test]
        fn cleaning_is_idempotent(t in arb_table()) {
            if let Ok(clean) = clean_table(&t) {
                let again = clean_table(&clean.to_raw()).unwrap();
                prop_assert_eq!(&again.columns, &clean.columns);
                prop_assert!(again.cleaning_log.rows_dropped.is_empty());
                prop_assert!(again.cleaning_log.columns_deduped.is_empty());
                for p in profile_columns(&clean.to_raw()) {
                    prop_assert_eq!(p.missing_count, 0);
                }
            }
        }

        #[test]
        fn surviving_rows_keep_their_order(t in arb_table()) {
            if let Ok(clean) = clean_table(&t) {
                let survivors: Vec<usize> = (1..=t.rows.len())
                    .filter(|n| !clean.cleaning_log.rows_dropped.contains(n))
                    .collect();
                let first = &clean.columns[0];
                let src = t.header.iter().position(|h| h == first.name()).unwrap();
                let expected: Vec<String> =
                    survivors.iter().map(|&n| t.rows[n - 1][src].clone()).collect();
                prop_assert_eq!(&first.cells, &expected);
            }
        }
    }
}
