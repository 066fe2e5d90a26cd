//! Report rows and their CSV form (`name,estimate,p_value,ci_low,ci_high,stars`).

use serde::Serialize;
use serde_json::{json, Value};

use crate::robinson::FixedModelInference;
use crate::selection::Diagnostics;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMode {
    Selective,
    Snooping,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub name: String,
    /// Column of the transformed design this row refers to.
    pub column: Option<usize>,
    pub estimate: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `(L, U)`; selective rows only.
    pub truncation: Option<(f64, f64)>,
    pub pivot_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectiveReport {
    pub rows: Vec<ReportRow>,
    pub sigma_used: f64,
    pub lambda_used: f64,
    pub mode: ReportMode,
    pub diagnostics: Option<Diagnostics>,
    pub notes: Vec<String>,
}

impl SelectiveReport {
    pub fn from_fixed(fixed: &FixedModelInference, columns: &[usize], mode: ReportMode) -> Self {
        let rows = (0..fixed.coefficients.len())
            .map(|k| ReportRow {
                name: fixed.names[k].clone(),
                column: columns.get(k).copied(),
                estimate: fixed.coefficients[k],
                p_value: fixed.p_values[k],
                ci_low: fixed.ci_lower[k],
                ci_high: fixed.ci_upper[k],
                truncation: None,
                pivot_value: None,
            })
            .collect();
        SelectiveReport {
            rows,
            sigma_used: fixed.sigma2_hat.sqrt(),
            lambda_used: 0.0,
            mode,
            diagnostics: None,
            notes: Vec::new(),
        }
    }
}

/// Significance code used in the report tables.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "."
    } else {
        ""
    }
}

/// Shortest round-trip decimal, with `inf`/`-inf` tokens for infinities.
pub fn format_number(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

/// JSON value for a number, with infinities as string tokens.
pub fn json_number(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(format_number(v))
    }
}

pub fn diagnostics_json(report: &SelectiveReport) -> Value {
    let opt = |v: Option<f64>| v.map(json_number).unwrap_or(Value::Null);
    let mut obj = serde_json::Map::new();
    obj.insert("mode".into(), json!(report.mode));
    obj.insert("sigma".into(), json_number(report.sigma_used));
    obj.insert("lambda".into(), json_number(report.lambda_used));
    if let Some(d) = &report.diagnostics {
        obj.insert("interval_ratio".into(), opt(d.interval_ratio));
        obj.insert("min_active_coef_scaled".into(), opt(d.min_active_coef_scaled));
        obj.insert("model_size".into(), json!(d.model_size));
        obj.insert("min_eigenvalue".into(), opt(d.min_eigenvalue));
        obj.insert("warnings".into(), json!(d.warnings));
    }
    let trunc: Vec<Value> = report
        .rows
        .iter()
        .filter_map(|r| {
            r.truncation.map(|(l, u)| {
                json!({"name": r.name, "lower": json_number(l), "upper": json_number(u),
                       "pivot": opt(r.pivot_value)})
            })
        })
        .collect();
    if !trunc.is_empty() {
        obj.insert("truncation".into(), Value::Array(trunc));
    }
    obj.insert("notes".into(), json!(report.notes));
    Value::Object(obj)
}

/// Report body as CSV, followed by a `# {json}` diagnostics line.
pub fn write_report_csv(report: &SelectiveReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "estimate", "p_value", "ci_low", "ci_high", "stars"])?;
    for r in &report.rows {
        w.write_record([
            r.name.clone(),
            format_number(r.estimate),
            format_number(r.p_value),
            format_number(r.ci_low),
            format_number(r.ci_high),
            stars(r.p_value).to_string(),
        ])?;
    }
    let mut out = String::from_utf8(w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))?)
        .expect("csv output is utf-8");
    out.push_str("# ");
    out.push_str(&serde_json::to_string(&diagnostics_json(report))?);
    out.push('\n');
    Ok(out)
}
