//! JSON-RPC 2.0 tool server over newline-delimited stdio.
//!
//! Requests are handled one at a time in arrival order. Each response is
//! written as a single line and flushed before the next request is read.

pub mod schema;
pub mod tools;

use std::io::{BufRead, Write};

use serde_json::{json, Map, Value};

use crate::error::{PalaceError, Result};
use crate::palace::Palace;

pub const PROTOCOL_VERSION: &str = "2024-11-05";
pub const SERVER_NAME: &str = "palace";

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32603;

#[derive(Debug)]
struct RpcError {
    code: i64,
    message: String,
}

impl RpcError {
    fn new(code: i64, message: impl Into<String>) -> Self {
        RpcError {
            code,
            message: message.into(),
        }
    }
}

impl From<PalaceError> for RpcError {
    fn from(e: PalaceError) -> Self {
        let code = if e.is_user_error() { INVALID_PARAMS } else { INTERNAL_ERROR };
        RpcError::new(code, e.to_string())
    }
}

fn error_response(id: Value, err: RpcError) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "error": {"code": err.code, "message": err.message}})
}

pub struct Server {
    palace: Palace,
    descriptors: Vec<tools::ToolDescriptor>,
}

impl Server {
    pub fn new(palace: Palace) -> Self {
        Server {
            palace,
            descriptors: tools::descriptors(),
        }
    }

    pub fn palace(&self) -> &Palace {
        &self.palace
    }

    /// Handles one line of input. `None` means nothing is to be written
    /// (a notification, or a blank line).
    pub fn handle_line(&self, line: &str) -> Option<String> {
        if line.trim().is_empty() {
            return None;
        }
        let response = match serde_json::from_str::<Value>(line) {
            Err(e) => Some(error_response(Value::Null, RpcError::new(PARSE_ERROR, format!("parse error: {e}")))),
            Ok(Value::Array(batch)) if batch.is_empty() => {
                Some(error_response(Value::Null, RpcError::new(INVALID_REQUEST, "empty batch")))
            }
            Ok(Value::Array(batch)) => {
                let out: Vec<Value> = batch.into_iter().filter_map(|m| self.handle(m)).collect();
                (!out.is_empty()).then_some(Value::Array(out))
            }
            Ok(msg) => self.handle(msg),
        };
        response.map(|v| v.to_string())
    }

    /// Handles one decoded message.
    pub fn handle(&self, msg: Value) -> Option<Value> {
        let Value::Object(obj) = msg else {
            return Some(error_response(Value::Null, RpcError::new(INVALID_REQUEST, "request must be an object")));
        };
        let id = obj.get("id").cloned();
        let is_notification = id.is_none();
        let id = id.unwrap_or(Value::Null);
        if !matches!(id, Value::Null | Value::String(_) | Value::Number(_)) {
            return Some(error_response(Value::Null, RpcError::new(INVALID_REQUEST, "id must be a string or number")));
        }
        let method = match (obj.get("jsonrpc").and_then(Value::as_str), obj.get("method").and_then(Value::as_str)) {
            (Some("2.0"), Some(m)) => m,
            _ => {
                return (!is_notification).then(|| {
                    error_response(id, RpcError::new(INVALID_REQUEST, "expected jsonrpc 2.0 request with a method"))
                })
            }
        };
        let params = obj.get("params").cloned().unwrap_or(Value::Null);
        let result = self.dispatch(method, params);
        if is_notification {
            return None;
        }
        Some(match result {
            Ok(v) => json!({"jsonrpc": "2.0", "id": id, "result": v}),
            Err(e) => error_response(id, e),
        })
    }

    fn dispatch(&self, method: &str, params: Value) -> std::result::Result<Value, RpcError> {
        match method {
            "initialize" => Ok(json!({
                "protocolVersion": PROTOCOL_VERSION,
                "capabilities": {"tools": {"listChanged": false}},
                "serverInfo": {"name": SERVER_NAME, "version": env!("CARGO_PKG_VERSION")}
            })),
            "ping" => Ok(json!({})),
            "tools/list" => Ok(json!({"tools": self.descriptors})),
            "tools/call" => self.call_tool(params),
            m if m.starts_with("notifications/") => Ok(Value::Null),
            other => Err(RpcError::new(METHOD_NOT_FOUND, format!("unknown method {other}"))),
        }
    }

    fn call_tool(&self, params: Value) -> std::result::Result<Value, RpcError> {
        let Value::Object(params) = params else {
            return Err(RpcError::new(INVALID_PARAMS, "tools/call params must be an object"));
        };
        let name = params
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| RpcError::new(INVALID_PARAMS, "tools/call needs a tool `name`"))?;
        let tool = self
            .descriptors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| RpcError::new(METHOD_NOT_FOUND, format!("unknown tool {name}")))?;
        let args = match params.get("arguments") {
            None | Some(Value::Null) => Value::Object(Map::new()),
            Some(a) => a.clone(),
        };
        schema::validate(&tool.input_schema, &args)
            .map_err(|m| RpcError::new(INVALID_PARAMS, format!("invalid arguments for {name}: {m}")))?;
        let Value::Object(args) = args else {
            return Err(RpcError::new(INVALID_PARAMS, "arguments must be an object"));
        };
        let out = tools::call(&self.palace, name, &args)?;
        Ok(json!({"content": [{"type": "text", "text": out.to_string()}]}))
    }

    /// Request loop; returns at end of input.
    pub fn serve<R: BufRead, W: Write>(&self, input: R, mut output: W) -> Result<()> {
        for line in input.lines() {
            let line = line?;
            if let Some(resp) = self.handle_line(&line) {
                output.write_all(resp.as_bytes())?;
                output.write_all(b"\n")?;
                output.flush()?;
            }
        }
        Ok(())
    }
}

/// Serves `palace` on the given streams until end of input.
pub fn serve<R: BufRead, W: Write>(palace: Palace, input: R, output: W) -> Result<()> {
    Server::new(palace).serve(input, output)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn server() -> (tempfile::TempDir, Server) {
        let dir = tempfile::tempdir().unwrap();
        let p = Palace::init(dir.path().join("p"), None).unwrap();
        (dir, Server::new(p))
    }

    fn call(s: &Server, line: &str) -> Value {
        serde_json::from_str(&s.handle_line(line).unwrap()).unwrap()
    }

    fn tool(s: &Server, id: u64, name: &str, args: Value) -> Value {
        let req = json!({"jsonrpc": "2.0", "id": id, "method": "tools/call", "params": {"name": name, "arguments": args}});
        call(s, &req.to_string())
    }

    fn tool_payload(resp: &Value) -> Value {
        serde_json::from_str(resp["result"]["content"][0]["text"].as_str().unwrap()).unwrap()
    }

    #[test]
    fn handshake() {
        let (_d, s) = server();
        let r = call(&s, r#"{"jsonrpc":"2.0","id":1,"method":"initialize","params":{}}"#);
        assert_eq!(r["id"], 1);
        assert_eq!(r["result"]["protocolVersion"], PROTOCOL_VERSION);
        assert!(r["result"]["capabilities"]["tools"].is_object());
        assert!(s.handle_line(r#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#).is_none());
    }

    #[test]
    fn error_codes() {
        let (_d, s) = server();
        assert_eq!(call(&s, "{not json")["error"]["code"], PARSE_ERROR);
        assert_eq!(call(&s, r#"{"jsonrpc":"2.0","id":2,"method":"nope"}"#)["error"]["code"], METHOD_NOT_FOUND);
        assert_eq!(tool(&s, 3, "nope", json!({}))["error"]["code"], METHOD_NOT_FOUND);
        let r = tool(&s, 4, "recall", json!({}));
        assert_eq!(r["error"]["code"], INVALID_PARAMS);
        assert_eq!(r["id"], 4);
        assert_eq!(tool(&s, 5, "remember", json!({"content": "x", "wing": "Dev", "room": "r"}))["error"]["code"], INVALID_PARAMS);
        assert_eq!(call(&s, r#"{"id":6,"method":"ping"}"#)["error"]["code"], INVALID_REQUEST);
        assert_eq!(tool(&s, 7, "recall", json!({"query": "   "}))["error"]["code"], INVALID_PARAMS);
    }

    #[test]
    fn tools_list() {
        let (_d, s) = server();
        let r = call(&s, r#"{"jsonrpc":"2.0","id":"a","method":"tools/list"}"#);
        assert_eq!(r["id"], "a");
        let names: Vec<&str> = r["result"]["tools"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
        for n in ["recall", "remember", "rooms", "palace_status", "kg_add", "kg_query", "diary_append", "diary_read"] {
            assert!(names.contains(&n));
        }
    }

    #[test]
    fn remember_recall_roundtrip() {
        let (_d, s) = server();
        assert!(tool_payload(&tool(&s, 1, "recall", json!({"query": "anything"})))["results"].as_array().unwrap().is_empty());
        let content = "The deploy key lives in vault | path secret/deploy\nline two";
        let first = tool_payload(&tool(&s, 2, "remember", json!({"content": content, "wing": "dev", "room": "ops"})));
        assert_eq!(first["deduplicated"], false);
        assert_eq!(first["drawer_id"], crate::derive_drawer_id("dev", "ops", content).unwrap());
        let second = tool_payload(&tool(&s, 3, "remember", json!({"content": content, "wing": "dev", "room": "ops"})));
        assert_eq!(second["deduplicated"], true);
        assert_eq!(second["drawer_id"], first["drawer_id"]);
        let got = tool_payload(&tool(&s, 4, "recall", json!({"query": "deploy key", "n_results": 1})));
        let results = got["results"].as_array().unwrap();
        assert_eq!(results.len(), 1);
        assert_eq!(results[0]["content"], content);
        let status = tool_payload(&tool(&s, 5, "palace_status", json!({})));
        assert_eq!(status["drawer_count"], 1);
        assert!(status["protocol_directive"].as_str().unwrap().contains("search before claiming ignorance"));
    }

    #[test]
    fn kg_and_diary_tools() {
        let (_d, s) = server();
        let added = tool_payload(&tool(&s, 1, "kg_add", json!({"subject": "max", "predicate": "loves", "object": "chess"})));
        assert_eq!(added["added"], true);
        let again = tool_payload(&tool(&s, 2, "kg_add", json!({"subject": "max", "predicate": "loves", "object": "chess"})));
        assert_eq!(again["added"], false);
        assert_eq!(again["triple_id"], added["triple_id"]);
        let q = tool_payload(&tool(&s, 3, "kg_query", json!({"subject": "max"})));
        assert_eq!(q["triples"].as_array().unwrap().len(), 1);
        assert_eq!(tool(&s, 4, "kg_query", json!({}))["error"]["code"], INVALID_PARAMS);
        assert_eq!(tool(&s, 5, "kg_add", json!({"subject": "a", "predicate": "b", "object": "c", "valid_from": "soon"}))["error"]["code"], INVALID_PARAMS);

        tool(&s, 6, "diary_append", json!({"agent_id": "scout", "session_id": "s1", "text": "one"}));
        tool(&s, 7, "diary_append", json!({"agent_id": "scout", "session_id": "s1", "text": "two"}));
        let d = tool_payload(&tool(&s, 8, "diary_read", json!({"agent_id": "scout", "last_n": 1})));
        assert_eq!(d["entries"][0]["text"], "two");
    }

    #[test]
    fn forget_tool() {
        let (_d, s) = server();
        let id = tool_payload(&tool(&s, 1, "remember", json!({"content": "temp", "wing": "a", "room": "b"})))["drawer_id"].clone();
        assert_eq!(tool_payload(&tool(&s, 2, "forget", json!({"drawer_id": id})))["forgotten"], true);
        assert_eq!(tool_payload(&tool(&s, 3, "wings", json!({})))["wings"], json!({}));
    }

    #[test]
    fn serve_loop_one_line_per_response() {
        let (_d, s) = server();
        let input = "{\"jsonrpc\":\"2.0\",\"id\":1,\"method\":\"ping\"}\n\n{\"jsonrpc\":\"2.0\",\"method\":\"notifications/initialized\"}\n[{\"jsonrpc\":\"2.0\",\"id\":2,\"method\":\"ping\"}]\n";
        let mut out = Vec::new();
        s.serve(input.as_bytes(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(serde_json::from_str::<Value>(lines[0]).unwrap()["id"], 1);
        assert_eq!(serde_json::from_str::<Value>(lines[1]).unwrap()[0]["id"], 2);
    }
}
