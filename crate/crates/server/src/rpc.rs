//! JSON-RPC 2.0 tool server: `initialize`, `ping`, `tools/list` and
//! `tools/call`, over newline-delimited stdio or a single HTTP route.
//!
//! | code   | meaning                                             |
//! |--------|-----------------------------------------------------|
//! | -32700 | body is not JSON                                    |
//! | -32600 | not a JSON-RPC 2.0 request object                   |
//! | -32601 | unknown method                                      |
//! | -32602 | bad `tools/call` params, unknown tool, schema error |
//! | -32603 | the tool failed while executing                     |

use std::io::{BufRead, Write};
use std::sync::Arc;

use iod_core::retrieval::tools::{call_tool, list_tools, ToolError};
use iod_core::retrieval::Retriever;
use serde_json::{json, Value};

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32603;

pub const PROTOCOL_VERSION: &str = "2024-11-05";

#[derive(Clone)]
pub struct ToolServer {
    retriever: Arc<Retriever>,
}

fn error(id: Value, code: i64, message: impl Into<String>) -> Value {
    json!({ "jsonrpc": "2.0", "id": id, "error": { "code": code, "message": message.into() } })
}

fn success(id: Value, result: Value) -> Value {
    json!({ "jsonrpc": "2.0", "id": id, "result": result })
}

impl ToolServer {
    pub fn new(retriever: Arc<Retriever>) -> Self {
        ToolServer { retriever }
    }

    /// Answer one message (object or batch). `None` when nothing is owed
    /// back: a notification, or a batch of notifications.
    pub fn handle(&self, msg: Value) -> Option<Value> {
        match msg {
            Value::Array(items) if items.is_empty() => Some(error(Value::Null, INVALID_REQUEST, "empty batch")),
            Value::Array(items) => {
                let out: Vec<Value> = items.into_iter().filter_map(|m| self.handle_one(m)).collect();
                (!out.is_empty()).then_some(Value::Array(out))
            }
            m => self.handle_one(m),
        }
    }

    /// Parse and answer one raw message.
    pub fn handle_str(&self, raw: &str) -> Option<String> {
        let reply = match serde_json::from_str::<Value>(raw) {
            Ok(v) => self.handle(v),
            Err(e) => Some(error(Value::Null, PARSE_ERROR, format!("parse error: {e}"))),
        };
        reply.map(|v| v.to_string())
    }

    fn handle_one(&self, msg: Value) -> Option<Value> {
        let Value::Object(mut req) = msg else {
            return Some(error(Value::Null, INVALID_REQUEST, "request must be an object"));
        };
        let id = req.remove("id");
        if id
            .as_ref()
            .is_some_and(|v| !(v.is_string() || v.is_number() || v.is_null()))
        {
            return Some(error(
                Value::Null,
                INVALID_REQUEST,
                "id must be a string, number or null",
            ));
        }
        let reply_id = id.clone().unwrap_or(Value::Null);
        if req.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
            return Some(error(reply_id, INVALID_REQUEST, "jsonrpc must be \"2.0\""));
        }
        let Some(method) = req.get("method").and_then(Value::as_str).map(str::to_string) else {
            return Some(error(reply_id, INVALID_REQUEST, "method must be a string"));
        };
        let params = req.remove("params").unwrap_or(Value::Null);
        let outcome = self.dispatch(&method, params);
        let id = id?;
        Some(match outcome {
            Ok(result) => success(id, result),
            Err((code, message)) => error(id, code, message),
        })
    }

    fn dispatch(&self, method: &str, params: Value) -> Result<Value, (i64, String)> {
        match method {
            "initialize" => Ok(json!({
                "protocolVersion": PROTOCOL_VERSION,
                "serverInfo": { "name": "iod", "version": env!("CARGO_PKG_VERSION") },
                "capabilities": { "tools": {} }
            })),
            "ping" => Ok(json!({})),
            "tools/list" => Ok(json!({ "tools": list_tools() })),
            "tools/call" => self.call(params),
            other => Err((METHOD_NOT_FOUND, format!("unknown method {other:?}"))),
        }
    }

    fn call(&self, params: Value) -> Result<Value, (i64, String)> {
        let Value::Object(p) = params else {
            return Err((INVALID_PARAMS, "params must be an object".into()));
        };
        let Some(name) = p.get("name").and_then(Value::as_str) else {
            return Err((INVALID_PARAMS, "params.name must be a string".into()));
        };
        let arguments = p.get("arguments").cloned().unwrap_or(Value::Null);
        match call_tool(&self.retriever, name, &arguments) {
            Ok(v) => Ok(json!({
                "content": [{ "type": "text", "text": v.to_string() }],
                "structuredContent": v,
                "isError": false
            })),
            Err(e @ (ToolError::UnknownTool(_) | ToolError::InvalidParams(_))) => Err((INVALID_PARAMS, e.to_string())),
            Err(e @ ToolError::Execution(_)) => Err((INTERNAL_ERROR, e.to_string())),
        }
    }

    /// Serve newline-delimited messages until end of input. Undecodable
    /// lines are answered with a parse error and the loop goes on.
    pub fn serve<R: BufRead, W: Write>(&self, mut input: R, mut output: W) -> std::io::Result<()> {
        let mut buf = Vec::new();
        loop {
            buf.clear();
            match input.read_until(b'\n', &mut buf) {
                Ok(0) => return Ok(()),
                Ok(_) => {}
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
                Err(e) => {
                    tracing::error!("tool transport read failed: {e}");
                    return Err(e);
                }
            }
            let line = String::from_utf8_lossy(&buf);
            if line.trim().is_empty() {
                continue;
            }
            if let Some(reply) = self.handle_str(line.trim()) {
                if let Err(e) = writeln!(output, "{reply}").and_then(|_| output.flush()) {
                    tracing::warn!("tool transport write failed: {e}");
                }
            }
        }
    }

    pub fn serve_stdio(&self) -> std::io::Result<()> {
        self.serve(std::io::stdin().lock(), std::io::stdout().lock())
    }
}
