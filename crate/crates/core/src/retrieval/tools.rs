//! Tool descriptors over the retriever and their execution.
//!
//! Parameter schemas are a small JSON Schema subset (`type`, `enum`,
//! `minimum`, `minLength`, `items`, `required`, `additionalProperties`,
//! `format: date-time`), checked by [`validate`] before any call runs.

use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::{Filters, RetrievalQuery, Retriever, Strategy, Tier, DEFAULT_MAX_HOPS, DEFAULT_TOP_K};
use crate::hetero_index::{Direction, GraphRef, LinkKind};
use crate::object_store::Pid;

pub const SEARCH_OBJECTS: &str = "iod.search_objects";
pub const SEARCH_CHUNKS: &str = "iod.search_chunks";
pub const SEARCH_FINE: &str = "iod.search_fine";
pub const GET_OBJECT: &str = "iod.get_object";
pub const GRAPH_NEIGHBORS: &str = "iod.graph_neighbors";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    #[serde(rename = "inputSchema")]
    pub input_schema: Value,
}

#[derive(Debug, Error, PartialEq)]
pub enum ToolError {
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("invalid params: {0}")]
    InvalidParams(String),
    #[error("{0}")]
    Execution(String),
}

fn top_k_schema() -> Value {
    json!({"type": "integer", "minimum": 1, "default": DEFAULT_TOP_K})
}

fn search_schema() -> Value {
    json!({
        "type": "object",
        "properties": {
            "text": {"type": "string", "minLength": 1, "description": "Query text"},
            "strategy": {"type": "string", "enum": ["keyword", "vector", "graph", "hybrid"], "default": "hybrid"},
            "top_k": top_k_schema(),
            "max_hops": {"type": "integer", "minimum": 0, "default": DEFAULT_MAX_HOPS},
            "domain": {"type": "string"},
            "after": {"type": "string", "format": "date-time"},
            "before": {"type": "string", "format": "date-time"},
            "kinds": {"type": "array", "items": {"type": "string"}},
            "source_allowlist": {"type": "array", "items": {"type": "string"}}
        },
        "required": ["text"],
        "additionalProperties": false
    })
}

/// The five tools, in a fixed order.
pub fn list_tools() -> Vec<ToolDescriptor> {
    let d = |name: &str, description: &str, schema: Value| ToolDescriptor {
        name: name.into(),
        description: description.into(),
        input_schema: schema,
    };
    vec![
        d(
            SEARCH_OBJECTS,
            "Search whole digital objects by their metadata (title, summary, keywords, questions).",
            search_schema(),
        ),
        d(
            SEARCH_CHUNKS,
            "Search chunk-level passages of documents.",
            search_schema(),
        ),
        d(
            SEARCH_FINE,
            "Search fine-grained knowledge: atomic facts and knowledge-graph entities.",
            search_schema(),
        ),
        d(
            GET_OBJECT,
            "Fetch a digital object record by pid; top_k bounds the listed children.",
            json!({
                "type": "object",
                "properties": {
                    "pid": {"type": "string", "minLength": 1},
                    "top_k": top_k_schema()
                },
                "required": ["pid"],
                "additionalProperties": false
            }),
        ),
        d(
            GRAPH_NEIGHBORS,
            "List neighbours of an index element (object, chunk, node, edge or fact ref).",
            json!({
                "type": "object",
                "properties": {
                    "ref": {"type": "string", "minLength": 1},
                    "link_kind": {"type": "string", "enum": ["containment", "derivation", "semantic"], "default": "semantic"},
                    "direction": {"type": "string", "enum": ["out", "in", "both"], "default": "both"},
                    "top_k": top_k_schema()
                },
                "required": ["ref"],
                "additionalProperties": false
            }),
        ),
    ]
}

fn type_ok(ty: &str, v: &Value) -> bool {
    match ty {
        "object" => v.is_object(),
        "string" => v.is_string(),
        "integer" => v.is_i64() || v.is_u64(),
        "number" => v.is_number(),
        "boolean" => v.is_boolean(),
        "array" => v.is_array(),
        "null" => v.is_null(),
        _ => false,
    }
}

/// Check `value` against `schema`; the error names the offending path.
pub fn validate(value: &Value, schema: &Value) -> Result<(), String> {
    validate_at(value, schema, "params")
}

fn validate_at(v: &Value, s: &Value, path: &str) -> Result<(), String> {
    if let Some(ty) = s.get("type").and_then(Value::as_str) {
        if !type_ok(ty, v) {
            return Err(format!("{path}: expected {ty}"));
        }
    }
    if let Some(allowed) = s.get("enum").and_then(Value::as_array) {
        if !allowed.contains(v) {
            return Err(format!("{path}: must be one of {}", Value::Array(allowed.clone())));
        }
    }
    if let (Some(min), Some(x)) = (s.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if x < min {
            return Err(format!("{path}: must be at least {min}"));
        }
    }
    if let (Some(min), Some(x)) = (s.get("minLength").and_then(Value::as_u64), v.as_str()) {
        if (x.trim().chars().count() as u64) < min {
            return Err(format!("{path}: must not be empty"));
        }
    }
    if s.get("format").and_then(Value::as_str) == Some("date-time") {
        if let Some(x) = v.as_str() {
            chrono::DateTime::parse_from_rfc3339(x).map_err(|e| format!("{path}: not an RFC 3339 date-time ({e})"))?;
        }
    }
    if let (Some(items), Some(arr)) = (s.get("items"), v.as_array()) {
        for (i, x) in arr.iter().enumerate() {
            validate_at(x, items, &format!("{path}[{i}]"))?;
        }
    }
    if let Some(obj) = v.as_object() {
        let props = s.get("properties").and_then(Value::as_object);
        if let Some(req) = s.get("required").and_then(Value::as_array) {
            for r in req.iter().filter_map(Value::as_str) {
                if !obj.contains_key(r) {
                    return Err(format!("{path}: missing required field {r:?}"));
                }
            }
        }
        for (k, x) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(ps) => validate_at(x, ps, &format!("{path}.{k}"))?,
                None if s.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{path}: unknown field {k:?}"));
                }
                None => {}
            }
        }
    }
    Ok(())
}

fn str_arg<'a>(args: &'a Map<String, Value>, k: &str) -> Option<&'a str> {
    args.get(k).and_then(Value::as_str)
}

fn usize_arg(args: &Map<String, Value>, k: &str, default: usize) -> usize {
    args.get(k).and_then(Value::as_u64).map_or(default, |x| x as usize)
}

fn set_arg(args: &Map<String, Value>, k: &str) -> Option<std::collections::BTreeSet<String>> {
    args.get(k)
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
}

fn time_arg(args: &Map<String, Value>, k: &str) -> Option<chrono::DateTime<chrono::Utc>> {
    str_arg(args, k)
        .and_then(|s| chrono::DateTime::parse_from_rfc3339(s).ok())
        .map(|t| t.with_timezone(&chrono::Utc))
}

/// Build the retrieval query a search tool call describes.
pub fn query_from_args(tier: Tier, args: &Map<String, Value>) -> Result<RetrievalQuery, ToolError> {
    let strategy: Strategy = str_arg(args, "strategy")
        .unwrap_or("hybrid")
        .parse()
        .map_err(ToolError::InvalidParams)?;
    let q = RetrievalQuery {
        text: str_arg(args, "text").unwrap_or_default().to_string(),
        tier,
        strategy,
        filters: Filters {
            domain: str_arg(args, "domain").map(str::to_string),
            after: time_arg(args, "after"),
            before: time_arg(args, "before"),
            kinds: set_arg(args, "kinds"),
            source_allowlist: set_arg(args, "source_allowlist"),
        },
        top_k: usize_arg(args, "top_k", DEFAULT_TOP_K),
        max_hops: usize_arg(args, "max_hops", DEFAULT_MAX_HOPS),
    };
    q.validate().map_err(|e| ToolError::InvalidParams(e.to_string()))?;
    Ok(q)
}

/// Validate and execute a tool call. Never mutates any store.
pub fn call_tool(retriever: &Retriever, name: &str, arguments: &Value) -> Result<Value, ToolError> {
    let tool = list_tools()
        .into_iter()
        .find(|t| t.name == name)
        .ok_or_else(|| ToolError::UnknownTool(name.to_string()))?;
    let empty = Value::Object(Map::new());
    let arguments = if arguments.is_null() { &empty } else { arguments };
    validate(arguments, &tool.input_schema).map_err(ToolError::InvalidParams)?;
    let args = arguments.as_object().expect("validated as object");
    let tier = match name {
        SEARCH_OBJECTS => Some(Tier::Object),
        SEARCH_CHUNKS => Some(Tier::Chunk),
        SEARCH_FINE => Some(Tier::Fine),
        _ => None,
    };
    if let Some(tier) = tier {
        let q = query_from_args(tier, args)?;
        let items = retriever.search(&q).map_err(|e| ToolError::Execution(e.to_string()))?;
        return Ok(json!({ "items": items }));
    }
    let top_k = usize_arg(args, "top_k", DEFAULT_TOP_K);
    match name {
        GET_OBJECT => {
            let raw = str_arg(args, "pid").unwrap_or_default();
            let pid: Pid = raw
                .parse()
                .map_err(|e| ToolError::InvalidParams(format!("params.pid: {e}")))?;
            let mut obj = retriever
                .object(&pid)
                .cloned()
                .ok_or_else(|| ToolError::Execution(format!("object {pid} not found")))?;
            let child_count = obj.children.len();
            obj.children.truncate(top_k);
            Ok(json!({ "object": obj, "child_count": child_count }))
        }
        GRAPH_NEIGHBORS => {
            let r: GraphRef = str_arg(args, "ref").unwrap_or_default().parse().map_err(
                |e: crate::hetero_index::ParseGraphRefError| ToolError::InvalidParams(format!("params.ref: {e}")),
            )?;
            let kind = match str_arg(args, "link_kind").unwrap_or("semantic") {
                "containment" => LinkKind::Containment,
                "derivation" => LinkKind::Derivation,
                _ => LinkKind::Semantic,
            };
            let direction = match str_arg(args, "direction").unwrap_or("both") {
                "out" => Direction::Out,
                "in" => Direction::In,
                _ => Direction::Both,
            };
            let mut n = retriever
                .graph()
                .neighbors(&r, kind, direction)
                .map_err(|e| ToolError::Execution(e.to_string()))?;
            n.truncate(top_k);
            Ok(json!({ "ref": r, "neighbors": n }))
        }
        _ => Err(ToolError::UnknownTool(name.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_tools_with_top_k_default() {
        let tools = list_tools();
        assert_eq!(tools.len(), 5);
        for t in &tools {
            assert_eq!(t.input_schema["properties"]["top_k"]["default"], json!(10));
        }
    }

    #[test]
    fn validator_paths() {
        let s = search_schema();
        assert!(validate(&json!({"text": "x", "top_k": 3}), &s).is_ok());
        assert!(validate(&json!({"top_k": 3}), &s).unwrap_err().contains("text"));
        assert!(validate(&json!({"text": "x", "top_k": 0}), &s).is_err());
        assert!(validate(&json!({"text": "x", "strategy": "magic"}), &s).is_err());
        assert!(validate(&json!({"text": "x", "bogus": 1}), &s).is_err());
        assert!(validate(&json!({"text": "x", "after": "yesterday"}), &s).is_err());
        assert!(validate(&json!({"text": "x", "kinds": ["a", 1]}), &s).is_err());
    }
}
