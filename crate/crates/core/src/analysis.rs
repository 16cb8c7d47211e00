//! The ten low-level analysis facts computed for each chart.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::fmt_num;
use crate::ingest::{parse_temporal, ColumnKind};
use crate::recommend::{ChartSpec, ChartType};
use crate::slice::DataSlice;

/// Normalized drift beyond which a series counts as trending.
pub const TREND_THRESHOLD: f64 = 0.1;
/// Tukey fence multiplier.
pub const FENCE_K: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("series is empty")]
    EmptySeries,
    #[error("trend needs at least two points")]
    SingletonSeries,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("chart `{spec_id}` slice lacks field `{field}`")]
    MissingField { spec_id: String, field: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactKind {
    Mean,
    Median,
    Stddev,
    Minimum,
    Maximum,
    Range,
    Sum,
    Trend,
    Outliers,
    Correlation,
}

impl FactKind {
    pub const SCALARS: [FactKind; 7] = [
        FactKind::Mean,
        FactKind::Median,
        FactKind::Stddev,
        FactKind::Minimum,
        FactKind::Maximum,
        FactKind::Range,
        FactKind::Sum,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FactKind::Mean => "mean",
            FactKind::Median => "median",
            FactKind::Stddev => "standard deviation",
            FactKind::Minimum => "minimum",
            FactKind::Maximum => "maximum",
            FactKind::Range => "range",
            FactKind::Sum => "sum",
            FactKind::Trend => "trend",
            FactKind::Outliers => "outliers",
            FactKind::Correlation => "correlation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Stable,
}

impl Trend {
    pub fn as_str(self) -> &'static str {
        match self {
            Trend::Increasing => "increasing",
            Trend::Decreasing => "decreasing",
            Trend::Stable => "stable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactTarget {
    Field(String),
    Pair(String, String),
}

impl FactTarget {
    /// The plotted field: the field itself, or the second of a pair.
    pub fn field(&self) -> &str {
        match self {
            FactTarget::Field(f) => f,
            FactTarget::Pair(_, y) => y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactValue {
    Number(f64),
    Label(String),
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisFact {
    pub kind: FactKind,
    pub target: FactTarget,
    pub value: FactValue,
    pub text: String,
}

/// Facts tagged with the chart they were computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartFacts {
    pub spec_id: String,
    pub facts: Vec<AnalysisFact>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub median: f64,
    pub stddev: f64,
    pub minimum: f64,
    pub maximum: f64,
    pub range: f64,
    pub sum: f64,
}

impl SummaryStats {
    pub fn get(&self, kind: FactKind) -> Option<f64> {
        Some(match kind {
            FactKind::Mean => self.mean,
            FactKind::Median => self.median,
            FactKind::Stddev => self.stddev,
            FactKind::Minimum => self.minimum,
            FactKind::Maximum => self.maximum,
            FactKind::Range => self.range,
            FactKind::Sum => self.sum,
            _ => return None,
        })
    }
}

fn sorted(series: &[f64]) -> Vec<f64> {
    let mut v = series.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Sample (n-1) standard deviation; midpoint median for even lengths.
pub fn compute_stats(series: &[f64]) -> Result<SummaryStats, AnalysisError> {
    if series.is_empty() {
        return Err(AnalysisError::EmptySeries);
    }
    let n = series.len();
    let sum: f64 = series.iter().sum();
    let mean = sum / n as f64;
    let s = sorted(series);
    let median = if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    };
    let stddev = if n > 1 {
        (series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let (minimum, maximum) = (s[0], s[n - 1]);
    Ok(SummaryStats {
        mean,
        median,
        stddev,
        minimum,
        maximum,
        range: maximum - minimum,
        sum,
    })
}

/// Least-squares slope over index positions, normalized by the value range.
pub fn normalized_drift(series: &[f64]) -> Result<f64, AnalysisError> {
    match series.len() {
        0 => return Err(AnalysisError::EmptySeries),
        1 => return Err(AnalysisError::SingletonSeries),
        _ => {}
    }
    let n = series.len() as f64;
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(0.0);
    }
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = series.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in series.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    Ok(slope * (n - 1.0) / (hi - lo))
}

pub fn classify_trend(series: &[f64]) -> Result<Trend, AnalysisError> {
    let d = normalized_drift(series)?;
    Ok(if d > TREND_THRESHOLD {
        Trend::Increasing
    } else if d < -TREND_THRESHOLD {
        Trend::Decreasing
    } else {
        Trend::Stable
    })
}

/// Quantile by linear interpolation between closest ranks.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Indices outside the Tukey fences; empty below four points.
pub fn detect_outliers(series: &[f64]) -> Vec<usize> {
    if series.len() < 4 {
        return Vec::new();
    }
    let s = sorted(series);
    let (q1, q3) = (quantile(&s, 0.25), quantile(&s, 0.75));
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - FENCE_K * iqr, q3 + FENCE_K * iqr);
    series
        .iter()
        .enumerate()
        .filter(|(_, v)| **v < lo || **v > hi)
        .map(|(i, _)| i)
        .collect()
}

/// Pearson coefficient, `None` when either side is constant.
pub fn compute_correlation(x: &[f64], y: &[f64]) -> Result<Option<f64>, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Ok(None);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

fn scalar_fact(kind: FactKind, field: &str, value: f64) -> AnalysisFact {
    AnalysisFact {
        kind,
        target: FactTarget::Field(field.to_string()),
        value: FactValue::Number(value),
        text: format!("The {} of {} is {}.", kind.label(), field, fmt_num(value)),
    }
}

fn trend_fact(field: &str, x: &str, trend: Trend) -> AnalysisFact {
    let text = match trend {
        Trend::Increasing => format!("{field} shows an increasing trend over {x}."),
        Trend::Decreasing => format!("{field} shows a decreasing trend over {x}."),
        Trend::Stable => format!("{field} remains stable over {x}."),
    };
    AnalysisFact {
        kind: FactKind::Trend,
        target: FactTarget::Field(field.to_string()),
        value: FactValue::Label(trend.as_str().to_string()),
        text,
    }
}

fn outlier_fact(field: &str, idx: Vec<usize>) -> AnalysisFact {
    let text = match idx.len() {
        0 => format!("{field} has 0 outlier points."),
        1 => format!("{field} has 1 outlier point (index {}).", idx[0]),
        n => {
            let list: Vec<String> = idx.iter().map(usize::to_string).collect();
            format!("{field} has {n} outlier points (indices {}).", list.join(", "))
        }
    };
    AnalysisFact {
        kind: FactKind::Outliers,
        target: FactTarget::Field(field.to_string()),
        value: FactValue::Indices(idx),
        text,
    }
}

fn correlation_fact(x: &str, y: &str, r: f64) -> AnalysisFact {
    AnalysisFact {
        kind: FactKind::Correlation,
        target: FactTarget::Pair(x.to_string(), y.to_string()),
        value: FactValue::Number(r),
        text: format!("The correlation between {x} and {y} is {}.", fmt_num(r)),
    }
}

fn trend_applies(spec: &ChartSpec, slice: &DataSlice) -> bool {
    if !matches!(spec.chart_type, ChartType::Line | ChartType::Area | ChartType::Bar)
        || spec.series_field.is_some()
        || slice.row_count() < 2
    {
        return false;
    }
    match spec.x_encoding.kind {
        ColumnKind::Temporal => true,
        ColumnKind::Numeric => slice
            .numbers(&spec.x_encoding.field)
            .map(|v| v.windows(2).all(|w| w[0] < w[1]))
            .unwrap_or(false),
        ColumnKind::Categorical => false,
    }
}

fn x_as_numbers(spec: &ChartSpec, slice: &DataSlice) -> Option<Vec<f64>> {
    match spec.x_encoding.kind {
        ColumnKind::Numeric => slice.numbers(&spec.x_encoding.field),
        ColumnKind::Temporal => slice.strings(&spec.x_encoding.field).map(|v| {
            v.iter()
                .map(|s| parse_temporal(s, true).map(|k| k as f64).unwrap_or(f64::NAN))
                .collect()
        }),
        ColumnKind::Categorical => None,
    }
}

/// Applicable facts for one chart: the seven scalar stats and outliers for
/// every numeric value field, trend for ordered un-grouped x, correlation for
/// scatter and bubble charts.
pub fn facts_for_chart(spec: &ChartSpec, slice: &DataSlice) -> Result<ChartFacts, AnalysisError> {
    if slice.is_empty() {
        return Err(AnalysisError::EmptySeries);
    }
    let missing = |field: &str| AnalysisError::MissingField {
        spec_id: spec.spec_id.clone(),
        field: field.to_string(),
    };
    let mut targets: Vec<&str> = Vec::new();
    for e in spec.value_encodings() {
        if !targets.contains(&e.field.as_str()) {
            targets.push(&e.field);
        }
    }
    let with_trend = trend_applies(spec, slice);
    let mut facts = Vec::new();
    for field in &targets {
        let values = slice.numbers(field).ok_or_else(|| missing(field))?;
        let stats = compute_stats(&values)?;
        for kind in FactKind::SCALARS {
            facts.push(scalar_fact(kind, field, stats.get(kind).expect("scalar kind")));
        }
        if with_trend {
            facts.push(trend_fact(field, &spec.x_encoding.field, classify_trend(&values)?));
        }
        facts.push(outlier_fact(field, detect_outliers(&values)));
    }
    if matches!(spec.chart_type, ChartType::Scatter | ChartType::Bubble) {
        let x = x_as_numbers(spec, slice).ok_or_else(|| missing(&spec.x_encoding.field))?;
        let yf = &spec.y_encodings[0].field;
        let y = slice.numbers(yf).ok_or_else(|| missing(yf))?;
        if let Some(r) = compute_correlation(&x, &y)? {
            facts.push(correlation_fact(&spec.x_encoding.field, yf, r));
        }
    }
    Ok(ChartFacts {
        spec_id: spec.spec_id.clone(),
        facts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stats_examples() {
        let s = compute_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.median, s.stddev, s.sum, s.range), (2.0, 2.0, 1.0, 6.0, 2.0));
        let s = compute_stats(&[7.0]).unwrap();
        assert_eq!((s.mean, s.stddev, s.range), (7.0, 0.0, 0.0));
        assert_eq!(compute_stats(&[5.0; 4]).unwrap().stddev, 0.0);
        assert_eq!(compute_stats(&[4.0, 1.0, 3.0, 2.0]).unwrap().median, 2.5);
        assert_eq!(compute_stats(&[]), Err(AnalysisError::EmptySeries));
    }

    #[test]
    fn trend_examples() {
        assert_eq!(normalized_drift(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(classify_trend(&[1.0, 2.0, 3.0, 4.0]).unwrap(), Trend::Increasing);
        assert_eq!(classify_trend(&[5.0, 5.0, 5.0]).unwrap(), Trend::Stable);
        assert_eq!(normalized_drift(&[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(classify_trend(&[4.0, 3.0, 2.0, 1.0]).unwrap(), Trend::Decreasing);
        assert_eq!(classify_trend(&[1.0]), Err(AnalysisError::SingletonSeries));
        assert_eq!(classify_trend(&[]), Err(AnalysisError::EmptySeries));
    }

    #[test]
    fn outlier_examples() {
        assert_eq!(detect_outliers(&[1.0, 2.0, 3.0, 100.0]), vec![3]);
        assert!(detect_outliers(&[1.0, 2.0, 3.0]).is_empty());
        assert!(detect_outliers(&[5.0; 5]).is_empty());
    }

    #[test]
    fn correlation_examples() {
        assert_eq!(compute_correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), Some(1.0));
        assert_eq!(compute_correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), Some(-1.0));
        assert_eq!(compute_correlation(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).unwrap(), None);
        assert_eq!(
            compute_correlation(&[1.0, 2.0], &[1.0]),
            Err(AnalysisError::LengthMismatch(2, 1))
        );
    }

    #[test]
    fn fact_texts_mention_target_and_value() {
        let f = scalar_fact(FactKind::Mean, "sales", 2.0);
        assert_eq!(f.text, "The mean of sales is 2.");
        assert_eq!(trend_fact("sales", "month", Trend::Decreasing).text, "sales shows a decreasing trend over month.");
        assert_eq!(outlier_fact("v", vec![3]).text, "v has 1 outlier point (index 3).");
    }

    proptest! {
        #[test]
        fn trend_invariant_under_positive_affine(
            v in prop::collection::vec(-1e3f64..1e3, 2..40),
            a in 0.01f64..100.0,
            b in -1e3f64..1e3,
        ) {
            let d = normalized_drift(&v).unwrap();
            // Labels can only flip when d sits on the threshold within rounding.
            prop_assume!((d.abs() - TREND_THRESHOLD).abs() > 1e-9);
            let w: Vec<f64> = v.iter().map(|x| a * x + b).collect();
            prop_assert_eq!(classify_trend(&v).unwrap(), classify_trend(&w).unwrap());
        }

        #[test]
        fn outliers_follow_permutation(
            v in prop::collection::vec(-100i32..100, 0..30),
            seed in any::<u64>(),
        ) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            let mut perm: Vec<usize> = (0..v.len()).collect();
            let mut s = seed;
            for i in (1..perm.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let permuted: Vec<f64> = perm.iter().map(|&i| v[i]).collect();
            let mut mapped: Vec<usize> = detect_outliers(&permuted).into_iter().map(|i| perm[i]).collect();
            mapped.sort_unstable();
            prop_assert_eq!(mapped, detect_outliers(&v));
        }

        #[test]
        fn correlation_is_bounded(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..30),
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Some(r) = compute_correlation(&x, &y).unwrap() {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
