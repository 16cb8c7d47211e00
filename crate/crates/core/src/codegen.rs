//! Spec-to-code transpiler.
//!
//! One [`ChartSpec`] plus its [`DataSlice`] is rendered into three text
//! formats: a Vega-Lite JSON document with inline data, and two Python
//! plotting scripts (matplotlib, plotly) that read the sibling CSV slice.
//! Chart-type variants that differ by one mark flag (line/area via
//! `filled`, grouped/stacked bars via `stacked`) share one template and
//! diverge only in the flag-controlled block.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::format::{fmt_num, json_num};
use crate::ingest::ColumnKind;
use crate::recommend::{ChartSpec, ChartType};
use crate::slice::{CellValue, DataSlice};

/// Categorical decet, in assignment order.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const VEGA_LITE_SCHEMA: &str = "https://vega.github.io/schema/vega-lite/v5.json";
const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodegenError {
    #[error("chart `{0}` has no data rows")]
    EmptyData(String),
    #[error("{grammar} template cannot express {chart_type}: {reason}")]
    UnsupportedCombination {
        grammar: CodeGrammar,
        chart_type: ChartType,
        reason: String,
    },
    #[error("data slice for `{spec_id}` lacks field `{field}`")]
    SliceMismatch { spec_id: String, field: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CodeGrammar {
    #[serde(rename = "vega-lite")]
    VegaLite,
    #[serde(rename = "matplotlib-script")]
    Matplotlib,
    #[serde(rename = "plotly-script")]
    Plotly,
}

impl CodeGrammar {
    pub const ALL: [CodeGrammar; 3] = [CodeGrammar::VegaLite, CodeGrammar::Matplotlib, CodeGrammar::Plotly];

    pub fn as_str(self) -> &'static str {
        match self {
            CodeGrammar::VegaLite => "vega-lite",
            CodeGrammar::Matplotlib => "matplotlib-script",
            CodeGrammar::Plotly => "plotly-script",
        }
    }

    /// File suffix of the emitted artifact, appended to the chart id.
    pub fn extension(self) -> &'static str {
        match self {
            CodeGrammar::VegaLite => ".vl.json",
            CodeGrammar::Matplotlib => ".mpl.py.txt",
            CodeGrammar::Plotly => ".plotly.py.txt",
        }
    }
}

impl std::fmt::Display for CodeGrammar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeArtifact {
    pub grammar: CodeGrammar,
    pub text: String,
    pub data_ref: String,
}

pub fn data_ref(spec_id: &str) -> String {
    format!("{spec_id}.data.csv")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisRanges {
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub y_min: Option<f64>,
    pub y_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickLabels {
    pub x: Vec<String>,
    pub y: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorAssignment {
    pub series: String,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualElements {
    pub spec_id: String,
    pub legend_entries: Vec<String>,
    pub axis_ranges: AxisRanges,
    pub tick_labels: TickLabels,
    pub color_assignment: Vec<ColorAssignment>,
}

fn check_slice(spec: &ChartSpec, slice: &DataSlice) -> Result<(), CodegenError> {
    if slice.is_empty() {
        return Err(CodegenError::EmptyData(spec.spec_id.clone()));
    }
    for f in spec.fields() {
        if slice.column(f).is_none() {
            return Err(CodegenError::SliceMismatch {
                spec_id: spec.spec_id.clone(),
                field: f.to_string(),
            });
        }
    }
    Ok(())
}

pub fn emit_code(
    spec: &ChartSpec,
    slice: &DataSlice,
    grammar: CodeGrammar,
) -> Result<CodeArtifact, CodegenError> {
    check_slice(spec, slice)?;
    let text = match grammar {
        CodeGrammar::VegaLite => {
            let doc = vega_lite(spec, slice);
            let mut s = serde_json::to_string_pretty(&doc).expect("json values serialize");
            s.push('\n');
            s
        }
        CodeGrammar::Matplotlib => matplotlib(spec, slice)?,
        CodeGrammar::Plotly => plotly(spec, slice),
    };
    Ok(CodeArtifact {
        grammar,
        text,
        data_ref: data_ref(&spec.spec_id),
    })
}

/// Distinct values in first-appearance order.
fn distinct_in_order(values: &[String]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    values.iter().filter(|v| seen.insert(v.as_str())).cloned().collect()
}

fn legend(spec: &ChartSpec, slice: &DataSlice) -> Vec<String> {
    spec.series_field
        .as_deref()
        .and_then(|s| slice.strings(s))
        .map(|v| distinct_in_order(&v))
        .unwrap_or_default()
}

fn palette_for(n: usize) -> Vec<&'static str> {
    (0..n).map(|i| PALETTE[i % PALETTE.len()]).collect()
}

// ---------------------------------------------------------------------------
// Vega-Lite

fn vl_type(kind: ColumnKind) -> &'static str {
    match kind {
        ColumnKind::Numeric => "quantitative",
        ColumnKind::Temporal => "temporal",
        ColumnKind::Categorical => "nominal",
    }
}

fn vl_values(slice: &DataSlice) -> Value {
    let rows = slice
        .rows()
        .into_iter()
        .map(|row| {
            let obj: Map<String, Value> = slice
                .columns
                .iter()
                .zip(row)
                .map(|(col, cell)| {
                    let v = match cell {
                        CellValue::Number(n) => json_num(*n),
                        CellValue::Text(t) => Value::String(t.clone()),
                    };
                    (col.name.clone(), v)
                })
                .collect();
            Value::Object(obj)
        })
        .collect();
    Value::Array(rows)
}

fn vega_lite(spec: &ChartSpec, slice: &DataSlice) -> Value {
    use ChartType::*;
    let x = &spec.x_encoding;
    let labels = &spec.axis_labels;
    let axis = |field: &str, kind: ColumnKind, title: &str| {
        json!({ "field": field, "type": vl_type(kind), "title": title })
    };
    let (mark, encoding) = match spec.chart_type {
        Line | Area => {
            let mut mark = json!({ "type": if spec.mark_flags.filled { "area" } else { "line" } });
            if spec.mark_flags.smooth {
                mark["interpolate"] = json!("monotone");
            }
            let y = &spec.y_encodings[0];
            (
                mark,
                json!({
                    "x": axis(&x.field, x.kind, &labels.x),
                    "y": axis(&y.field, ColumnKind::Numeric, &labels.y),
                    "color": { "value": PALETTE[0] },
                }),
            )
        }
        Bar | GroupedBar | StackedBar => {
            let y = &spec.y_encodings[0];
            let x_type = if x.kind == ColumnKind::Temporal { "ordinal" } else { "nominal" };
            let mut enc = json!({
                "x": { "field": x.field, "type": x_type, "title": labels.x, "sort": null },
                "y": axis(&y.field, ColumnKind::Numeric, &labels.y),
            });
            match &spec.series_field {
                Some(series) => {
                    let domain = legend(spec, slice);
                    enc["color"] = json!({
                        "field": series,
                        "type": "nominal",
                        "scale": { "domain": domain, "range": palette_for(domain.len()) },
                    });
                    if spec.mark_flags.stacked {
                        enc["y"]["stack"] = json!("zero");
                    } else {
                        enc["y"]["stack"] = Value::Null;
                        enc["xOffset"] = json!({ "field": series });
                    }
                }
                None => enc["color"] = json!({ "value": PALETTE[0] }),
            }
            (json!({ "type": "bar" }), enc)
        }
        Scatter | Bubble => {
            let y = &spec.y_encodings[0];
            let mut enc = json!({
                "x": axis(&x.field, x.kind, &labels.x),
                "y": axis(&y.field, ColumnKind::Numeric, &labels.y),
                "color": { "value": PALETTE[0] },
            });
            if spec.chart_type == Bubble {
                let size = &spec.y_encodings[1];
                enc["size"] = json!({ "field": size.field, "type": "quantitative", "title": size.field });
            }
            (json!({ "type": "point", "filled": true }), enc)
        }
        Pie => {
            let y = &spec.y_encodings[0];
            let categories = slice.strings(&x.field).map(|v| distinct_in_order(&v)).unwrap_or_default();
            (
                json!({ "type": "arc" }),
                json!({
                    "theta": { "field": y.field, "type": "quantitative", "title": labels.y },
                    "color": {
                        "field": x.field,
                        "type": "nominal",
                        "title": labels.x,
                        "sort": null,
                        "scale": { "domain": categories, "range": palette_for(categories.len()) },
                    },
                }),
            )
        }
        Histogram => (
            json!({ "type": "bar" }),
            json!({
                "x": { "field": x.field, "type": "quantitative", "bin": { "maxbins": HISTOGRAM_BINS }, "title": labels.x },
                "y": { "aggregate": "count", "type": "quantitative", "title": labels.y },
                "color": { "value": PALETTE[0] },
            }),
        ),
        Box => (
            json!({ "type": "boxplot" }),
            json!({
                "y": axis(&x.field, ColumnKind::Numeric, &labels.y),
                "color": { "value": PALETTE[0] },
            }),
        ),
        Heatmap => {
            let (ycat, value) = (&spec.y_encodings[0], &spec.y_encodings[1]);
            (
                json!({ "type": "rect" }),
                json!({
                    "x": { "field": x.field, "type": "nominal", "title": labels.x, "sort": null },
                    "y": { "field": ycat.field, "type": "nominal", "title": labels.y, "sort": null },
                    "color": { "field": value.field, "type": "quantitative", "title": value.describe() },
                }),
            )
        }
    };
    json!({
        "$schema": VEGA_LITE_SCHEMA,
        "title": spec.title,
        "width": 480,
        "height": 320,
        "data": { "values": vl_values(slice) },
        "mark": mark,
        "encoding": encoding,
    })
}

// ---------------------------------------------------------------------------
// Python script templates

/// Python string literal (JSON escaping is a valid subset).
fn py(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn py_list(items: &[&str]) -> String {
    let parts: Vec<String> = items.iter().map(|s| py(s)).collect();
    format!("[{}]", parts.join(", "))
}

fn output_stem(spec: &ChartSpec) -> &str {
    &spec.spec_id
}

fn matplotlib(spec: &ChartSpec, slice: &DataSlice) -> Result<String, CodegenError> {
    use ChartType::*;
    if spec.mark_flags.smooth {
        return Err(CodegenError::UnsupportedCombination {
            grammar: CodeGrammar::Matplotlib,
            chart_type: spec.chart_type,
            reason: "no native spline interpolation for smooth lines".into(),
        });
    }
    let x = &spec.x_encoding;
    let df = |f: &str| format!("df[{}]", py(f));
    let c0 = py(PALETTE[0]);
    let mut s = String::new();
    s.push_str("import matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\nimport pandas as pd\n\n");
    let _ = writeln!(s, "df = pd.read_csv({})", py(&data_ref(&spec.spec_id)));
    if x.kind == ColumnKind::Temporal && matches!(spec.chart_type, Line | Area | Scatter) {
        let _ = writeln!(s, "{} = pd.to_datetime({}.astype(str))", df(&x.field), df(&x.field));
    }
    s.push_str("fig, ax = plt.subplots(figsize=(8, 5))\n");
    match spec.chart_type {
        Line | Area => {
            let y = df(&spec.y_encodings[0].field);
            let xs = df(&x.field);
            if spec.mark_flags.filled {
                let _ = writeln!(s, "ax.fill_between({xs}, {y}, color={c0}, alpha=0.4)");
            }
            let _ = writeln!(s, "ax.plot({xs}, {y}, color={c0})");
        }
        Bar => {
            let _ = writeln!(
                s,
                "ax.bar({}.astype(str), {}, color={c0})",
                df(&x.field),
                df(&spec.y_encodings[0].field)
            );
        }
        GroupedBar | StackedBar => {
            let series = spec.series_field.as_deref().unwrap_or_default();
            let n = legend(spec, slice).len();
            let _ = writeln!(
                s,
                "pivot = df.pivot_table(index={}, columns={}, values={}, aggfunc=\"sum\", sort=False)",
                py(&x.field),
                py(series),
                py(&spec.y_encodings[0].field)
            );
            let _ = writeln!(
                s,
                "pivot.plot(kind=\"bar\", stacked={}, ax=ax, color={})",
                if spec.mark_flags.stacked { "True" } else { "False" },
                py_list(&palette_for(n))
            );
            let _ = writeln!(s, "ax.legend(title={})", py(series));
        }
        Scatter => {
            let _ = writeln!(s, "ax.scatter({}, {}, color={c0})", df(&x.field), df(&spec.y_encodings[0].field));
        }
        Bubble => {
            let size = df(&spec.y_encodings[1].field);
            let _ = writeln!(s, "span = ({size}.max() - {size}.min()) or 1.0");
            let _ = writeln!(s, "sizes = 20 + 380 * ({size} - {size}.min()) / span");
            let _ = writeln!(
                s,
                "ax.scatter({}, {}, s=sizes, color={c0}, alpha=0.6)",
                df(&x.field),
                df(&spec.y_encodings[0].field)
            );
        }
        Pie => {
            let n = slice.strings(&x.field).map(|v| distinct_in_order(&v).len()).unwrap_or(0);
            let _ = writeln!(
                s,
                "ax.pie({}, labels={}.astype(str), colors={}, autopct=\"%1.1f%%\")",
                df(&spec.y_encodings[0].field),
                df(&x.field),
                py_list(&palette_for(n))
            );
            s.push_str("ax.axis(\"equal\")\n");
        }
        Histogram => {
            let _ = writeln!(s, "ax.hist({}, bins={HISTOGRAM_BINS}, color={c0})", df(&x.field));
        }
        Box => {
            let _ = writeln!(s, "ax.boxplot([{}])", df(&x.field));
            let _ = writeln!(s, "ax.set_xticks([1], [{}])", py(&x.field));
        }
        Heatmap => {
            let (ycat, value) = (&spec.y_encodings[0], &spec.y_encodings[1]);
            let _ = writeln!(
                s,
                "pivot = df.pivot_table(index={}, columns={}, values={}, aggfunc=\"sum\", sort=False)",
                py(&ycat.field),
                py(&x.field),
                py(&value.field)
            );
            s.push_str("im = ax.imshow(pivot.values, cmap=\"viridis\", aspect=\"auto\")\n");
            s.push_str("ax.set_xticks(range(len(pivot.columns)), [str(c) for c in pivot.columns])\n");
            s.push_str("ax.set_yticks(range(len(pivot.index)), [str(i) for i in pivot.index])\n");
            let _ = writeln!(s, "fig.colorbar(im, ax=ax, label={})", py(&value.describe()));
        }
    }
    let _ = writeln!(s, "ax.set_title({})", py(&spec.title));
    if spec.chart_type != Pie {
        let _ = writeln!(s, "ax.set_xlabel({})", py(&spec.axis_labels.x));
        let _ = writeln!(s, "ax.set_ylabel({})", py(&spec.axis_labels.y));
    }
    s.push_str("fig.tight_layout()\n");
    let _ = writeln!(s, "fig.savefig({})", py(&format!("{}.mpl.png", output_stem(spec))));
    Ok(s)
}

fn plotly(spec: &ChartSpec, slice: &DataSlice) -> String {
    use ChartType::*;
    let x = &spec.x_encoding;
    let labels = &spec.axis_labels;
    let mut s = String::new();
    s.push_str("import pandas as pd\nimport plotly.express as px\n\n");
    let _ = writeln!(s, "df = pd.read_csv({})", py(&data_ref(&spec.spec_id)));
    let title = py(&spec.title);
    let one = py_list(&[PALETTE[0]]);
    let y0 = spec.y_encodings.first().map(|e| py(&e.field)).unwrap_or_default();
    let call = match spec.chart_type {
        Line | Area => {
            let func = if spec.mark_flags.filled { "area" } else { "line" };
            let shape = if spec.mark_flags.smooth { "spline" } else { "linear" };
            format!(
                "px.{func}(df, x={}, y={y0}, title={title}, line_shape={}, color_discrete_sequence={one})",
                py(&x.field),
                py(shape)
            )
        }
        Bar => format!(
            "px.bar(df, x={}, y={y0}, title={title}, color_discrete_sequence={one})",
            py(&x.field)
        ),
        GroupedBar | StackedBar => {
            let n = legend(spec, slice).len();
            format!(
                "px.bar(df, x={}, y={y0}, color={}, barmode={}, title={title}, color_discrete_sequence={})",
                py(&x.field),
                py(spec.series_field.as_deref().unwrap_or_default()),
                py(if spec.mark_flags.stacked { "relative" } else { "group" }),
                py_list(&palette_for(n))
            )
        }
        Scatter => format!(
            "px.scatter(df, x={}, y={y0}, title={title}, color_discrete_sequence={one})",
            py(&x.field)
        ),
        Bubble => format!(
            "px.scatter(df, x={}, y={y0}, size={}, title={title}, color_discrete_sequence={one})",
            py(&x.field),
            py(&spec.y_encodings[1].field)
        ),
        Pie => {
            let n = slice.strings(&x.field).map(|v| distinct_in_order(&v).len()).unwrap_or(0);
            format!(
                "px.pie(df, names={}, values={y0}, title={title}, color_discrete_sequence={})",
                py(&x.field),
                py_list(&palette_for(n))
            )
        }
        Histogram => format!(
            "px.histogram(df, x={}, nbins={HISTOGRAM_BINS}, title={title}, color_discrete_sequence={one})",
            py(&x.field)
        ),
        Box => format!(
            "px.box(df, y={}, title={title}, color_discrete_sequence={one})",
            py(&x.field)
        ),
        Heatmap => format!(
            "px.density_heatmap(df, x={}, y={y0}, z={}, histfunc=\"sum\", title={title})",
            py(&x.field),
            py(&spec.y_encodings[1].field)
        ),
    };
    let _ = writeln!(s, "fig = {call}");
    if spec.chart_type != Pie {
        let _ = writeln!(
            s,
            "fig.update_layout(xaxis_title={}, yaxis_title={})",
            py(&labels.x),
            py(&labels.y)
        );
    }
    let _ = writeln!(s, "fig.write_html({})", py(&format!("{}.plotly.html", output_stem(spec))));
    s
}

// ---------------------------------------------------------------------------
// Visual elements

/// `[min - 5%, max + 5%]` of the data span.
pub fn padded_range(values: &[f64]) -> Option<(f64, f64)> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return None;
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = if hi > lo {
        0.05 * (hi - lo)
    } else if lo != 0.0 {
        0.05 * lo.abs()
    } else {
        0.5
    };
    Some((lo - pad, hi + pad))
}

fn numeric_ticks(range: Option<(f64, f64)>) -> Vec<String> {
    match range {
        Some((lo, hi)) => (0..5)
            .map(|i| fmt_num(lo + (hi - lo) * i as f64 / 4.0))
            .collect(),
        None => Vec::new(),
    }
}

fn stacked_totals(spec: &ChartSpec, slice: &DataSlice) -> Vec<f64> {
    let xs = slice.strings(&spec.x_encoding.field).unwrap_or_default();
    let ys = slice.numbers(&spec.y_encodings[0].field).unwrap_or_default();
    let mut order: Vec<String> = Vec::new();
    let mut totals: std::collections::HashMap<&str, f64> = std::collections::HashMap::new();
    for (x, y) in xs.iter().zip(&ys) {
        if !totals.contains_key(x.as_str()) {
            order.push(x.clone());
        }
        *totals.entry(x.as_str()).or_insert(0.0) += y;
    }
    order.iter().map(|x| totals[x.as_str()]).collect()
}

pub fn derive_visual_elements(
    spec: &ChartSpec,
    slice: &DataSlice,
) -> Result<VisualElements, CodegenError> {
    use ChartType::*;
    check_slice(spec, slice)?;
    let legend_entries = legend(spec, slice);
    let color_assignment = legend_entries
        .iter()
        .enumerate()
        .map(|(i, s)| ColorAssignment {
            series: s.clone(),
            color: PALETTE[i % PALETTE.len()].to_string(),
        })
        .collect();

    let x = &spec.x_encoding;
    let x_values = || slice.numbers(&x.field).unwrap_or_default();
    let y_values = || slice.numbers(&spec.y_encodings[0].field).unwrap_or_default();
    let categories = |field: &str| {
        slice
            .strings(field)
            .map(|v| distinct_in_order(&v))
            .unwrap_or_default()
    };

    let x_range = match spec.chart_type {
        Line | Area | Scatter | Bubble | Histogram if x.kind == ColumnKind::Numeric => {
            padded_range(&x_values())
        }
        _ => None,
    };
    let y_range = match spec.chart_type {
        Line | Area | Bar | GroupedBar | Scatter | Bubble => padded_range(&y_values()),
        StackedBar => padded_range(&stacked_totals(spec, slice)),
        Box => padded_range(&x_values()),
        Pie | Histogram | Heatmap => None,
    };

    let x_ticks = match spec.chart_type {
        Pie => Vec::new(),
        Box => vec![x.field.clone()],
        _ if x_range.is_some() => numeric_ticks(x_range),
        _ => categories(&x.field),
    };
    let y_ticks = match spec.chart_type {
        Heatmap => categories(&spec.y_encodings[0].field),
        _ => numeric_ticks(y_range),
    };

    Ok(VisualElements {
        spec_id: spec.spec_id.clone(),
        legend_entries,
        axis_ranges: AxisRanges {
            x_min: x_range.map(|r| r.0),
            x_max: x_range.map(|r| r.1),
            y_min: y_range.map(|r| r.0),
            y_max: y_range.map(|r| r.1),
        },
        tick_labels: TickLabels { x: x_ticks, y: y_ticks },
        color_assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{clean_table, CleanTable, RawTable};
    use crate::recommend::{enumerate_candidates, RecommendConfig};
    use crate::slice::slice_for_spec;

    fn table(header: &[&str], rows: Vec<Vec<String>>) -> CleanTable {
        clean_table(&RawTable {
            source_id: "s".into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows,
        })
        .unwrap()
    }

    fn grouped_table() -> CleanTable {
        let rows = (0..12)
            .map(|i| {
                vec![
                    ["North", "South", "East"][i % 3].to_string(),
                    ["B", "A", "B", "C"][i % 4].to_string(),
                    format!("{}", 10 + (i * 7) % 11),
                ]
            })
            .collect();
        table(&["region", "product", "units"], rows)
    }

    fn month_sales() -> CleanTable {
        let rows = (1..=6).map(|m| vec![format!("2021-{m:02}"), format!("{}", 10 * m)]).collect();
        table(&["month", "sales"], rows)
    }

    fn find(t: &CleanTable, ty: ChartType) -> (ChartSpec, DataSlice) {
        let spec = enumerate_candidates(t, &RecommendConfig::default())
            .unwrap()
            .into_iter()
            .find(|s| s.chart_type == ty)
            .unwrap();
        let slice = slice_for_spec(&spec, t).unwrap();
        (spec, slice)
    }

    #[test]
    fn filled_flag_only_changes_the_mark() {
        let (mut spec, slice) = find(&month_sales(), ChartType::Line);
        let line = emit_code(&spec, &slice, CodeGrammar::VegaLite).unwrap().text;
        assert!(line.contains("\"type\": \"line\""));
        spec.mark_flags.filled = true;
        let area = emit_code(&spec, &slice, CodeGrammar::VegaLite).unwrap().text;
        assert_eq!(line.replace("\"type\": \"line\"", "\"type\": \"area\""), area);
    }

    #[test]
    fn line_and_area_specs_differ_only_in_mark() {
        let t = month_sales();
        let (line, s1) = find(&t, ChartType::Line);
        let (area, s2) = find(&t, ChartType::Area);
        let mut a: Value = serde_json::from_str(&emit_code(&line, &s1, CodeGrammar::VegaLite).unwrap().text).unwrap();
        let mut b: Value = serde_json::from_str(&emit_code(&area, &s2, CodeGrammar::VegaLite).unwrap().text).unwrap();
        assert_ne!(a["mark"], b["mark"]);
        a.as_object_mut().unwrap().remove("mark");
        b.as_object_mut().unwrap().remove("mark");
        assert_eq!(a, b);
    }

    #[test]
    fn grouped_and_stacked_differ_only_in_stack_block() {
        let t = grouped_table();
        let (g, s1) = find(&t, ChartType::GroupedBar);
        let (st, s2) = find(&t, ChartType::StackedBar);
        assert_eq!(g.series_field, st.series_field);
        let strip = |spec: &ChartSpec, slice: &DataSlice| {
            let mut v: Value = serde_json::from_str(&emit_code(spec, slice, CodeGrammar::VegaLite).unwrap().text).unwrap();
            let enc = v["encoding"].as_object_mut().unwrap();
            enc.remove("xOffset");
            enc.get_mut("y").unwrap().as_object_mut().unwrap().remove("stack");
            v.as_object_mut().unwrap().remove("mark");
            v
        };
        assert_eq!(strip(&g, &s1), strip(&st, &s2));
    }

    #[test]
    fn emission_is_deterministic_for_every_grammar() {
        let (spec, slice) = find(&grouped_table(), ChartType::GroupedBar);
        for g in CodeGrammar::ALL {
            let a = emit_code(&spec, &slice, g).unwrap();
            let b = emit_code(&spec, &slice, g).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.data_ref, format!("{}.data.csv", spec.spec_id));
            assert!(!a.text.is_empty());
        }
    }

    #[test]
    fn scripts_read_the_data_ref() {
        let (spec, slice) = find(&month_sales(), ChartType::Bar);
        for g in [CodeGrammar::Matplotlib, CodeGrammar::Plotly] {
            let a = emit_code(&spec, &slice, g).unwrap();
            assert!(a.text.contains(&format!("pd.read_csv(\"{}\")", a.data_ref)));
        }
    }

    #[test]
    fn empty_data_is_rejected() {
        let (spec, mut slice) = find(&month_sales(), ChartType::Line);
        for c in &mut slice.columns {
            c.values.clear();
        }
        assert!(matches!(emit_code(&spec, &slice, CodeGrammar::VegaLite), Err(CodegenError::EmptyData(_))));
    }

    #[test]
    fn smooth_lines_are_a_matplotlib_gap() {
        let (mut spec, slice) = find(&month_sales(), ChartType::Line);
        spec.mark_flags.smooth = true;
        assert!(matches!(
            emit_code(&spec, &slice, CodeGrammar::Matplotlib),
            Err(CodegenError::UnsupportedCombination { grammar: CodeGrammar::Matplotlib, .. })
        ));
        let vl = emit_code(&spec, &slice, CodeGrammar::VegaLite).unwrap().text;
        assert!(vl.contains("monotone"));
        assert!(emit_code(&spec, &slice, CodeGrammar::Plotly).unwrap().text.contains("spline"));
    }

    #[test]
    fn legend_follows_first_appearance() {
        let (spec, slice) = find(&grouped_table(), ChartType::GroupedBar);
        let ve = derive_visual_elements(&spec, &slice).unwrap();
        assert_eq!(ve.legend_entries, vec!["B", "A", "C"]);
        let colors: Vec<&str> = ve.color_assignment.iter().map(|c| c.color.as_str()).collect();
        assert_eq!(colors, vec![PALETTE[0], PALETTE[1], PALETTE[2]]);
    }

    #[test]
    fn y_range_pads_five_percent() {
        let rows = vec![
            vec!["2021-01".to_string(), "10".to_string()],
            vec!["2021-02".to_string(), "20".to_string()],
            vec!["2021-03".to_string(), "15".to_string()],
        ];
        let t = table(&["month", "v"], rows);
        let (spec, slice) = find(&t, ChartType::Line);
        let ve = derive_visual_elements(&spec, &slice).unwrap();
        assert_eq!((ve.axis_ranges.y_min, ve.axis_ranges.y_max), (Some(9.5), Some(20.5)));
        assert!(ve.legend_entries.is_empty());
        assert!(ve.axis_ranges.x_min.is_none());
        assert_eq!(ve.tick_labels.x, vec!["2021-01", "2021-02", "2021-03"]);
    }

    #[test]
    fn palette_cycles_past_ten_series() {
        let names: Vec<String> = (0..12).map(|i| format!("s{i}")).collect();
        let mut slice = DataSlice { spec_id: "x".into(), columns: vec![] };
        slice.columns.push(crate::slice::SliceColumn {
            name: "k".into(),
            kind: ColumnKind::Categorical,
            values: names.iter().map(|n| CellValue::Text(n.clone())).collect(),
        });
        slice.columns.push(crate::slice::SliceColumn {
            name: "g".into(),
            kind: ColumnKind::Categorical,
            values: names.iter().map(|n| CellValue::Text(n.clone())).collect(),
        });
        slice.columns.push(crate::slice::SliceColumn {
            name: "v".into(),
            kind: ColumnKind::Numeric,
            values: (0..12).map(|i| CellValue::Number(i as f64)).collect(),
        });
        let (mut spec, _) = find(&grouped_table(), ChartType::GroupedBar);
        spec.x_encoding.field = "k".into();
        spec.series_field = Some("g".into());
        spec.y_encodings[0].field = "v".into();
        let ve = derive_visual_elements(&spec, &slice).unwrap();
        assert_eq!(ve.color_assignment[10].color, PALETTE[0]);
        assert_eq!(ve.color_assignment[11].color, PALETTE[1]);
    }
}
