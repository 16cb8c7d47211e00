//! The data a single chart shows: referenced fields only, grouped and
//! aggregated the way the chart encodes them.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::fmt_num;
use crate::ingest::{parse_number, parse_temporal, CleanTable, ColumnKind};
use crate::recommend::{Aggregate, ChartSpec, ChartType};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SliceError {
    #[error("field `{0}` not present in table")]
    UnknownField(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellValue {
    Number(f64),
    Text(String),
}

impl CellValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            CellValue::Number(v) => Some(*v),
            CellValue::Text(t) => parse_number(t),
        }
    }

    pub fn render(&self) -> String {
        match self {
            CellValue::Number(v) => fmt_num(*v),
            CellValue::Text(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceColumn {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<CellValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSlice {
    pub spec_id: String,
    pub columns: Vec<SliceColumn>,
}

impl DataSlice {
    pub fn row_count(&self) -> usize {
        self.columns.first().map(|c| c.values.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.row_count() == 0
    }

    pub fn column(&self, name: &str) -> Option<&SliceColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn numbers(&self, name: &str) -> Option<Vec<f64>> {
        self.column(name)
            .map(|c| c.values.iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect())
    }

    pub fn strings(&self, name: &str) -> Option<Vec<String>> {
        self.column(name)
            .map(|c| c.values.iter().map(CellValue::render).collect())
    }

    pub fn header(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn rows(&self) -> Vec<Vec<&CellValue>> {
        (0..self.row_count())
            .map(|r| self.columns.iter().map(|c| &c.values[r]).collect())
            .collect()
    }

    /// CSV rendering used for the sibling `.data.csv` artifact.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        // Writing into a Vec cannot fail.
        w.write_record(self.header()).expect("in-memory write");
        for row in self.rows() {
            w.write_record(row.iter().map(|c| c.render())).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

struct Field<'a> {
    name: &'a str,
    kind: ColumnKind,
    cells: &'a [String],
}

impl Field<'_> {
    fn value(&self, row: usize) -> CellValue {
        match self.kind {
            ColumnKind::Numeric => {
                CellValue::Number(parse_number(&self.cells[row]).unwrap_or(f64::NAN))
            }
            _ => CellValue::Text(self.cells[row].clone()),
        }
    }
}

/// Materializes the rows a chart displays.
///
/// Grouped charts keep groups in first-appearance order, except that a
/// temporal x is always sorted chronologically.
pub fn slice_for_spec(spec: &ChartSpec, table: &CleanTable) -> Result<DataSlice, SliceError> {
    let field = |name: &str| -> Result<Field, SliceError> {
        let col = table
            .column(name)
            .ok_or_else(|| SliceError::UnknownField(name.to_string()))?;
        Ok(Field {
            name: col.name(),
            kind: col.kind(),
            cells: &col.cells,
        })
    };
    let x = field(&spec.x_encoding.field)?;
    let row_order = chronological_order(&x, table.row_count);

    let columns = match spec.chart_type {
        ChartType::Histogram | ChartType::Box => raw_columns(&[&x], &row_order),
        ChartType::Scatter | ChartType::Bubble => {
            let mut fields = vec![x];
            for e in &spec.y_encodings {
                fields.push(field(&e.field)?);
            }
            raw_columns(&fields.iter().collect::<Vec<_>>(), &row_order)
        }
        _ => {
            let mut keys = vec![x];
            if let Some(s) = &spec.series_field {
                keys.push(field(s)?);
            }
            let value_enc = spec.y_encodings.last().expect("validated spec has a y encoding");
            if spec.chart_type == ChartType::Heatmap {
                keys.push(field(&spec.y_encodings[0].field)?);
            }
            let value = field(&value_enc.field)?;
            grouped_columns(&keys, &value, value_enc.aggregate, &row_order)
        }
    };
    Ok(DataSlice {
        spec_id: spec.spec_id.clone(),
        columns,
    })
}

fn chronological_order(x: &Field, rows: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rows).collect();
    if x.kind == ColumnKind::Temporal {
        let keys: Vec<i64> = x
            .cells
            .iter()
            .map(|c| parse_temporal(c, true).unwrap_or(i64::MIN))
            .collect();
        order.sort_by_key(|&r| keys[r]);
    }
    order
}

fn raw_columns(fields: &[&Field], order: &[usize]) -> Vec<SliceColumn> {
    fields
        .iter()
        .map(|f| SliceColumn {
            name: f.name.to_string(),
            kind: f.kind,
            values: order.iter().map(|&r| f.value(r)).collect(),
        })
        .collect()
}

fn grouped_columns(
    keys: &[Field],
    value: &Field,
    aggregate: Aggregate,
    order: &[usize],
) -> Vec<SliceColumn> {
    // (first row of the group, values)
    let mut groups: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut index: HashMap<Vec<&str>, usize> = HashMap::new();
    for &r in order {
        let v = parse_number(&value.cells[r]).unwrap_or(f64::NAN);
        if aggregate == Aggregate::None {
            groups.push((r, vec![v]));
            continue;
        }
        let key: Vec<&str> = keys.iter().map(|k| k.cells[r].as_str()).collect();
        match index.get(&key) {
            Some(&g) => groups[g].1.push(v),
            None => {
                index.insert(key, groups.len());
                groups.push((r, vec![v]));
            }
        }
    }
    let mut columns: Vec<SliceColumn> = keys
        .iter()
        .map(|k| SliceColumn {
            name: k.name.to_string(),
            kind: k.kind,
            values: groups.iter().map(|(r, _)| k.value(*r)).collect(),
        })
        .collect();
    columns.push(SliceColumn {
        name: value.name.to_string(),
        kind: ColumnKind::Numeric,
        values: groups
            .iter()
            .map(|(_, vals)| CellValue::Number(apply(aggregate, vals)))
            .collect(),
    });
    columns
}

fn apply(aggregate: Aggregate, vals: &[f64]) -> f64 {
    match aggregate {
        Aggregate::None => vals[0],
        Aggregate::Sum => vals.iter().sum(),
        Aggregate::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
        Aggregate::Count => vals.len() as f64,
    }
}
