//! Declarative table tool for action steps: describe, aggregate, chart spec.
//!
//! Cells that are empty are missing values and skipped; any other cell in
//! a numeric position must parse as a number.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::ingestion::Table;
use crate::object_store::Pid;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("{pid} is a {kind} object, not a table")]
    NotATable { pid: String, kind: String },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("column {column:?} row {row}: {value:?} is not a number")]
    NonNumeric { column: String, row: usize, value: String },
    #[error("{func} over an empty group{}", group.as_ref().map(|g| format!(" {g:?}")).unwrap_or_default())]
    EmptyGroup { func: String, group: Option<String> },
    #[error("table source unreadable: {0}")]
    Source(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFunc {
    Sum,
    Mean,
    Min,
    Max,
    Count,
}

impl AggFunc {
    pub fn as_str(self) -> &'static str {
        match self {
            AggFunc::Sum => "sum",
            AggFunc::Mean => "mean",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
            AggFunc::Count => "count",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartType {
    Bar,
    Line,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TableOp {
    Describe,
    Aggregate {
        func: AggFunc,
        column: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        group_by: Option<String>,
    },
    ChartSpec {
        chart: ChartType,
        x_field: String,
        y_field: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        series: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    /// A table-kind L1 object.
    pub object: Pid,
    #[serde(flatten)]
    pub op: TableOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub non_empty: usize,
    pub distinct: usize,
    pub numeric: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub x: String,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSeries {
    pub name: String,
    pub points: Vec<ChartPoint>,
}

/// Declarative chart description; rendering is left to the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpecRecord {
    #[serde(rename = "type")]
    pub chart_type: ChartType,
    pub x_field: String,
    pub y_field: String,
    pub series: Vec<ChartSeries>,
}

fn column(table: &Table, name: &str) -> Result<usize, ActionError> {
    table
        .header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| ActionError::UnknownColumn(name.to_string()))
}

fn cell(row: &[String], col: usize) -> &str {
    row.get(col).map(String::as_str).unwrap_or("")
}

/// Numeric value of a cell; `None` when empty.
fn number(table: &Table, row: usize, col: usize) -> Result<Option<f64>, ActionError> {
    let v = cell(&table.rows[row], col).trim();
    if v.is_empty() {
        return Ok(None);
    }
    v.parse::<f64>().map(Some).map_err(|_| ActionError::NonNumeric {
        column: table.header[col].clone(),
        row: row + 1,
        value: v.to_string(),
    })
}

pub fn describe(table: &Table) -> Value {
    let columns: Vec<ColumnStats> = table
        .header
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let values: Vec<&str> = table
                .rows
                .iter()
                .map(|r| cell(r, c).trim())
                .filter(|v| !v.is_empty())
                .collect();
            let nums: Vec<f64> = values.iter().filter_map(|v| v.parse().ok()).collect();
            let numeric = !values.is_empty() && nums.len() == values.len();
            let distinct = values.iter().collect::<std::collections::BTreeSet<_>>().len();
            ColumnStats {
                name: name.clone(),
                non_empty: values.len(),
                distinct,
                numeric,
                min: numeric.then(|| nums.iter().copied().fold(f64::INFINITY, f64::min)),
                max: numeric.then(|| nums.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                mean: numeric.then(|| nums.iter().sum::<f64>() / nums.len() as f64),
            }
        })
        .collect();
    json!({ "rows": table.rows.len(), "cols": table.header.len(), "columns": columns })
}

/// Apply `func` to `values`. Mean, min and max of nothing are errors.
pub fn aggregate_values(func: AggFunc, values: &[f64], group: Option<&str>) -> Result<f64, ActionError> {
    let empty = || ActionError::EmptyGroup {
        func: func.as_str().into(),
        group: group.map(str::to_string),
    };
    match func {
        AggFunc::Count => Ok(values.len() as f64),
        AggFunc::Sum => Ok(values.iter().sum()),
        AggFunc::Mean if values.is_empty() => Err(empty()),
        AggFunc::Mean => Ok(values.iter().sum::<f64>() / values.len() as f64),
        AggFunc::Min => values.iter().copied().reduce(f64::min).ok_or_else(empty),
        AggFunc::Max => values.iter().copied().reduce(f64::max).ok_or_else(empty),
    }
}

pub fn aggregate(
    table: &Table,
    func: AggFunc,
    column_name: &str,
    group_by: Option<&str>,
) -> Result<Value, ActionError> {
    let col = column(table, column_name)?;
    let group_col = group_by.map(|g| column(table, g)).transpose()?;
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::new();
    for r in 0..table.rows.len() {
        let key = group_col.map(|g| cell(&table.rows[r], g).to_string());
        if let Some(k) = &key {
            groups.entry(k.clone()).or_default();
        }
        // Count counts non-empty cells of any type.
        let v = if func == AggFunc::Count {
            (!cell(&table.rows[r], col).trim().is_empty()).then_some(1.0)
        } else {
            number(table, r, col)?
        };
        if let Some(v) = v {
            all.push(v);
            if let Some(k) = key {
                groups.entry(k).or_default().push(v);
            }
        }
    }
    let mut out = json!({ "func": func.as_str(), "column": column_name });
    match group_by {
        None => out["value"] = json!(aggregate_values(func, &all, None)?),
        Some(g) => {
            out["group_by"] = json!(g);
            let rows = groups
                .iter()
                .map(|(k, vs)| Ok(json!({ "key": k, "value": aggregate_values(func, vs, Some(k))? })))
                .collect::<Result<Vec<_>, ActionError>>()?;
            out["groups"] = Value::Array(rows);
        }
    }
    Ok(out)
}

pub fn chart_spec(
    table: &Table,
    chart: ChartType,
    x_field: &str,
    y_field: &str,
    series: Option<&str>,
) -> Result<ChartSpecRecord, ActionError> {
    let x = column(table, x_field)?;
    let y = column(table, y_field)?;
    let s = series.map(|s| column(table, s)).transpose()?;
    let mut by_series: Vec<ChartSeries> = Vec::new();
    for r in 0..table.rows.len() {
        let Some(yv) = number(table, r, y)? else {
            continue;
        };
        let name = s.map_or_else(|| y_field.to_string(), |c| cell(&table.rows[r], c).to_string());
        let point = ChartPoint {
            x: cell(&table.rows[r], x).to_string(),
            y: yv,
        };
        match by_series.iter_mut().find(|x| x.name == name) {
            Some(existing) => existing.points.push(point),
            None => by_series.push(ChartSeries {
                name,
                points: vec![point],
            }),
        }
    }
    Ok(ChartSpecRecord {
        chart_type: chart,
        x_field: x_field.into(),
        y_field: y_field.into(),
        series: by_series,
    })
}

/// Run `op` over `table`; returns the result record and a one-line
/// statement of it for the report.
pub fn run_table_op(table: &Table, op: &TableOp, title: &str) -> Result<(Value, String), ActionError> {
    match op {
        TableOp::Describe => {
            let v = describe(table);
            let s = format!(
                "Table {title} has {} rows and {} columns.",
                table.rows.len(),
                table.header.len()
            );
            Ok((v, s))
        }
        TableOp::Aggregate { func, column, group_by } => {
            let v = aggregate(table, *func, column, group_by.as_deref())?;
            let s = match v.get("groups").and_then(Value::as_array) {
                Some(groups) => {
                    let parts: Vec<String> = groups
                        .iter()
                        .map(|g| format!("{} = {}", g["key"].as_str().unwrap_or(""), fmt_num(g["value"].as_f64())))
                        .collect();
                    format!(
                        "The {} of {column} by {} in table {title}: {}.",
                        func.as_str(),
                        group_by.as_deref().unwrap_or(""),
                        parts.join(", ")
                    )
                }
                None => format!(
                    "The {} of {column} in table {title} is {}.",
                    func.as_str(),
                    fmt_num(v["value"].as_f64())
                ),
            };
            Ok((v, s))
        }
        TableOp::ChartSpec {
            chart,
            x_field,
            y_field,
            series,
        } => {
            let spec = chart_spec(table, *chart, x_field, y_field, series.as_deref())?;
            let s = format!(
                "A {} chart of {y_field} against {x_field} from table {title} has {} series.",
                serde_json::to_value(chart)
                    .expect("serializable")
                    .as_str()
                    .unwrap_or(""),
                spec.series.len()
            );
            Ok((serde_json::to_value(&spec).expect("serializable"), s))
        }
    }
}

fn fmt_num(v: Option<f64>) -> String {
    match v {
        Some(x) if x.fract() == 0.0 && x.abs() < 1e15 => format!("{}", x as i64),
        Some(x) => format!("{x}"),
        None => "n/a".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(header: &[&str], rows: &[&[&str]]) -> Table {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        }
    }

    #[test]
    fn sum_of_one_two_three() {
        let table = t(&["value"], &[&["1"], &["2"], &["3"]]);
        let v = aggregate(&table, AggFunc::Sum, "value", None).unwrap();
        assert_eq!(v["value"], json!(6.0));
    }

    #[test]
    fn describe_two_by_three() {
        let table = t(&["a", "b", "c"], &[&["1", "x", "2"], &["3", "y", ""]]);
        let v = describe(&table);
        assert_eq!((v["rows"].as_u64(), v["cols"].as_u64()), (Some(2), Some(3)));
        assert_eq!(v["columns"][0]["mean"], json!(2.0));
        assert_eq!(v["columns"][1]["numeric"], json!(false));
    }

    #[test]
    fn mean_of_empty_group_is_an_error() {
        let table = t(&["g", "v"], &[&["a", "1"], &["b", ""]]);
        let e = aggregate(&table, AggFunc::Mean, "v", Some("g")).unwrap_err();
        assert_eq!(
            e,
            ActionError::EmptyGroup {
                func: "mean".into(),
                group: Some("b".into())
            }
        );
        let empty = t(&["v"], &[]);
        assert!(aggregate(&empty, AggFunc::Mean, "v", None).is_err());
        assert_eq!(aggregate(&empty, AggFunc::Sum, "v", None).unwrap()["value"], json!(0.0));
    }

    #[test]
    fn unknown_column_and_non_numeric() {
        let table = t(&["v"], &[&["x"]]);
        assert_eq!(
            aggregate(&table, AggFunc::Sum, "w", None).unwrap_err(),
            ActionError::UnknownColumn("w".into())
        );
        assert!(matches!(
            aggregate(&table, AggFunc::Sum, "v", None).unwrap_err(),
            ActionError::NonNumeric { row: 1, .. }
        ));
    }

    #[test]
    fn chart_series_split() {
        let table = t(
            &["year", "v", "s"],
            &[&["2020", "1", "a"], &["2021", "2", "b"], &["2022", "3", "a"]],
        );
        let c = chart_spec(&table, ChartType::Line, "year", "v", Some("s")).unwrap();
        assert_eq!(c.series.len(), 2);
        assert_eq!(c.series[0].points.len(), 2);
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["type"], json!("line"));
    }

    #[test]
    fn spec_serde_is_flat() {
        let s: ActionSpec = serde_json::from_value(json!({
            "object": "iod:x/0123456789abcdef", "op": "aggregate", "func": "sum", "column": "v"
        }))
        .unwrap();
        assert!(matches!(s.op, TableOp::Aggregate { func: AggFunc::Sum, .. }));
    }
}
