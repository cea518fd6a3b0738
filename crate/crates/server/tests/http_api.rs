mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use iod_core::agents::SessionRecord;
use iod_core::bench::{SynthManifest, SynthSpec};
use iod_server::{router, AppState, HttpOptions};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    app: Router,
    manifest: SynthManifest,
    logs: std::path::PathBuf,
}

fn fixture(options: HttpOptions) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        domains: 2,
        docs_per_domain: 4,
        questions: 4,
    };
    let b = common::build_synthetic(dir.path(), 21, spec);
    let logs = dir.path().join("logs");
    let options = HttpOptions {
        log_dir: Some(logs.clone()),
        ..options
    };
    Fixture {
        app: router(AppState::new(b.env, options)),
        manifest: b.manifest,
        logs,
        _dir: dir,
    }
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn json_of(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = send(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

/// Parse `id:` / `event:` / `data:` blocks.
fn parse_sse(text: &str) -> Vec<(u64, String, Value)> {
    text.split("\n\n")
        .filter(|b| !b.trim().is_empty())
        .map(|block| {
            let (mut id, mut event, mut data) = (None, None, String::new());
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("id:") {
                    id = Some(v.trim().parse().unwrap());
                } else if let Some(v) = line.strip_prefix("event:") {
                    event = Some(v.trim().to_string());
                } else if let Some(v) = line.strip_prefix("data:") {
                    data.push_str(v.trim_start());
                }
            }
            (id.unwrap(), event.unwrap(), serde_json::from_str(&data).unwrap())
        })
        .collect()
}

/// Read the event stream; stop after `limit` events (dropping the
/// connection) or when the server ends it.
async fn read_events(
    app: &Router,
    id: &str,
    last_event_id: Option<u64>,
    limit: Option<usize>,
) -> Vec<(u64, String, Value)> {
    let mut req = Request::builder().uri(format!("/sessions/{id}/events"));
    if let Some(l) = last_event_id {
        req = req.header("Last-Event-ID", l.to_string());
    }
    let resp = app.clone().oneshot(req.body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()[header::CONTENT_TYPE], "text/event-stream");
    let mut body = resp.into_body();
    let mut text = String::new();
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(30), body.frame())
            .await
            .expect("event stream stalled");
        match frame {
            None => break,
            Some(f) => {
                if let Ok(data) = f.unwrap().into_data() {
                    text.push_str(std::str::from_utf8(&data).unwrap());
                }
            }
        }
        if limit.is_some_and(|n| text.matches("\n\n").count() >= n) {
            break;
        }
    }
    let mut events = parse_sse(&text);
    if let Some(n) = limit {
        events.truncate(n);
    }
    events
}

async fn record(app: &Router, id: &str) -> SessionRecord {
    let (s, b) = send(app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    serde_json::from_slice(&b).unwrap()
}

fn as_stored(events: &[(u64, String, Value)]) -> Vec<Value> {
    events.iter().map(|(_, _, v)| v.clone()).collect()
}

fn question(f: &Fixture) -> String {
    let d = &f.manifest.docs[0];
    format!("What is the {} of {}?", d.facts[0].attribute, d.entity)
}

#[tokio::test(flavor = "multi_thread")]
async fn create_confirm_stream_to_report() {
    let f = fixture(HttpOptions::default());
    let (s, created) = json_of(&f.app, "POST", "/sessions", Some(json!({"query": question(&f)}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(created["state"], "awaiting_user");
    assert!(created["plan"]["steps"].as_array().is_some_and(|s| !s.is_empty()));
    let id = created["id"].as_str().unwrap().to_string();
    assert!(uuid_like(&id));

    let follower = {
        let app = f.app.clone();
        let id = id.clone();
        tokio::spawn(async move { read_events(&app, &id, None, None).await })
    };
    let (s, confirmed) = json_of(&f.app, "POST", &format!("/sessions/{id}/confirm"), None).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(confirmed["state"], "confirmed");
    let (s, again) = json_of(&f.app, "POST", &format!("/sessions/{id}/confirm"), Some(json!({}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(again["error"].as_str().unwrap().contains("confirm"));

    let live = follower.await.unwrap();
    assert_eq!(live.last().unwrap().1, "report_ready");
    let rec = record(&f.app, &id).await;
    assert_eq!(rec.state.as_str(), "done");
    let stored: Vec<Value> = rec.events.iter().map(|e| serde_json::to_value(e).unwrap()).collect();
    assert_eq!(as_stored(&live), stored);
    for (seq, kind, v) in &live {
        assert_eq!(v["seq"], *seq);
        assert_eq!(v["kind"], *kind);
    }

    let log = std::fs::read_to_string(f.logs.join(format!("{id}.events.jsonl"))).unwrap();
    let logged: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(logged, stored);

    let req = Request::get(format!("/reports/{id}")).body(Body::empty()).unwrap();
    let resp = f.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()[header::CONTENT_TYPE], "text/markdown; charset=utf-8");
    let md = String::from_utf8(resp.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap();
    assert_eq!(md, rec.report.unwrap().to_markdown());
}

fn uuid_like(s: &str) -> bool {
    let parts: Vec<usize> = s.split('-').map(str::len).collect();
    parts == [8, 4, 4, 4, 12] && s.chars().all(|c| c == '-' || c.is_ascii_hexdigit())
}

#[tokio::test(flavor = "multi_thread")]
async fn replay_after_reconnect_is_exact() {
    let f = fixture(HttpOptions::default());
    let (_, created) = json_of(&f.app, "POST", "/sessions", Some(json!({"query": question(&f)}))).await;
    let id = created["id"].as_str().unwrap().to_string();
    send(&f.app, "POST", &format!("/sessions/{id}/confirm"), None).await;
    let first = read_events(&f.app, &id, None, Some(3)).await;
    assert_eq!(first.iter().map(|e| e.0).collect::<Vec<_>>(), [1, 2, 3]);
    let rest = read_events(&f.app, &id, Some(first.last().unwrap().0), None).await;
    let rec = record(&f.app, &id).await;
    let stored: Vec<Value> = rec.events.iter().map(|e| serde_json::to_value(e).unwrap()).collect();
    let joined: Vec<Value> = as_stored(&first).into_iter().chain(as_stored(&rest)).collect();
    assert_eq!(joined, stored);
    let full = read_events(&f.app, &id, None, None).await;
    assert_eq!(as_stored(&full), stored);
    assert!(read_events(&f.app, &id, Some(stored.len() as u64), None)
        .await
        .is_empty());
    let (s, _) = {
        let req = Request::get(format!("/sessions/{id}/events"))
            .header("Last-Event-ID", "abc")
            .body(Body::empty())
            .unwrap();
        let r = f.app.clone().oneshot(req).await.unwrap();
        (r.status(), ())
    };
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn clarification_round_trip() {
    let f = fixture(HttpOptions::default());
    let (s, created) = json_of(&f.app, "POST", "/sessions", Some(json!({"query": "tell me more"}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(created["state"], "awaiting_user");
    assert!(created["clarification"]["question"].is_string());
    assert!(created["plan"].is_null());
    let id = created["id"].as_str().unwrap().to_string();
    let (s, _) = json_of(&f.app, "POST", &format!("/sessions/{id}/confirm"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = json_of(
        &f.app,
        "POST",
        &format!("/sessions/{id}/clarify"),
        Some(json!({"answer": "  "})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let d = &f.manifest.docs[0];
    let answer = format!("the {} of {}", d.facts[0].attribute, d.entity);
    let (s, planned) = json_of(
        &f.app,
        "POST",
        &format!("/sessions/{id}/clarify"),
        Some(json!({"answer": answer})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert!(planned["plan"].is_object());
    assert!(planned["clarification"].is_null());
    let (s, _) = json_of(&f.app, "POST", &format!("/sessions/{id}/confirm"), None).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let events = read_events(&f.app, &id, None, None).await;
    let kinds: Vec<&str> = events.iter().map(|e| e.1.as_str()).collect();
    assert_eq!(&kinds[..3], ["clarification_needed", "plan_proposed", "plan_confirmed"]);
    assert_eq!(*kinds.last().unwrap(), "report_ready");
    let (s, _) = json_of(
        &f.app,
        "POST",
        &format!("/sessions/{id}/clarify"),
        Some(json!({"answer": "more"})),
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_edits_are_rejected_with_reason() {
    let f = fixture(HttpOptions::default());
    let (_, created) = json_of(&f.app, "POST", "/sessions", Some(json!({"query": question(&f)}))).await;
    let id = created["id"].as_str().unwrap().to_string();
    let mut steps = created["plan"]["steps"].as_array().unwrap().clone();
    steps.last_mut().unwrap()["depends_on"] = json!([999]);
    let (s, body) = json_of(
        &f.app,
        "POST",
        &format!("/sessions/{id}/confirm"),
        Some(json!({"steps": steps})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("999"), "{body}");
    let (s, body) = json_of(
        &f.app,
        "POST",
        &format!("/sessions/{id}/confirm"),
        Some(json!({"steps": []})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(!body["error"].as_str().unwrap().is_empty());
    let (s, _) = json_of(
        &f.app,
        "POST",
        &format!("/sessions/{id}/confirm"),
        Some(json!({"steps": "nope"})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(record(&f.app, &id).await.state.as_str(), "awaiting_user");

    let single = vec![created["plan"]["steps"][0].clone(), {
        let mut w = created["plan"]["steps"].as_array().unwrap().last().unwrap().clone();
        w["id"] = json!(2);
        w["depends_on"] = json!([created["plan"]["steps"][0]["id"]]);
        w
    }];
    let (s, confirmed) = json_of(
        &f.app,
        "POST",
        &format!("/sessions/{id}/confirm"),
        Some(json!({"steps": single})),
    )
    .await;
    assert_eq!(s, StatusCode::ACCEPTED, "{confirmed}");
    assert_eq!(confirmed["plan"]["steps"].as_array().unwrap().len(), 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn lookups_and_errors() {
    let f = fixture(HttpOptions::default());
    let doc = &f.manifest.docs[2];
    let (s, obj) = json_of(&f.app, "GET", &format!("/objects/{}", doc.pid), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(obj["pid"], doc.pid.to_string());
    assert_eq!(obj["explicit_meta"]["title"], doc.title);
    let chunk = obj["children"][0].as_str().unwrap().to_string();
    let (s, c) = json_of(&f.app, "GET", &format!("/objects/{chunk}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(c["parent"], doc.pid.to_string());

    assert_eq!(
        send(&f.app, "GET", "/objects/iod:nowhere/0123456789abcdef", None)
            .await
            .0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        send(&f.app, "GET", "/objects/garbage", None).await.0,
        StatusCode::BAD_REQUEST
    );
    for uri in ["/sessions/nope", "/sessions/nope/events", "/reports/nope"] {
        assert_eq!(send(&f.app, "GET", uri, None).await.0, StatusCode::NOT_FOUND, "{uri}");
    }
    for uri in ["/sessions/nope/confirm", "/sessions/nope/clarify"] {
        assert_eq!(
            send(&f.app, "POST", uri, Some(json!({"answer": "x"}))).await.0,
            StatusCode::NOT_FOUND,
            "{uri}"
        );
    }
    assert_eq!(
        send(&f.app, "POST", "/sessions", Some(json!({"query": ""}))).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        send(&f.app, "POST", "/sessions", Some(json!({"q": "x"}))).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        send(&f.app, "POST", "/rpc", Some(json!({}))).await.0,
        StatusCode::NOT_FOUND
    );

    let (_, created) = json_of(&f.app, "POST", "/sessions", Some(json!({"query": question(&f)}))).await;
    let id = created["id"].as_str().unwrap();
    let (s, body) = json_of(&f.app, "GET", &format!("/reports/{id}"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("no report"));
}

#[tokio::test(flavor = "multi_thread")]
async fn search_endpoint() {
    let f = fixture(HttpOptions::default());
    let doc = &f.manifest.docs[1];
    let (s, r) = json_of(
        &f.app,
        "POST",
        "/search",
        Some(json!({"text": doc.title, "tier": "object", "top_k": 2})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let items = r["items"].as_array().unwrap();
    assert_eq!(items.len(), 2);
    assert_eq!(items[0]["ref"], format!("object:{}", doc.pid));
    let (s, r) = json_of(&f.app, "POST", "/search", Some(json!({"text": doc.entity}))).await;
    assert_eq!(s, StatusCode::OK);
    assert!(r["items"][0]["ref"].as_str().unwrap().starts_with("chunk:"));
    for bad in [
        json!({"tier": "object"}),
        json!({"text": "x", "tier": "planet"}),
        json!({"text": "x", "top_k": -1}),
        json!([1]),
    ] {
        assert_eq!(
            send(&f.app, "POST", "/search", Some(bad.clone())).await.0,
            StatusCode::BAD_REQUEST,
            "{bad}"
        );
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn rpc_and_static_mounts() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>ui</html>").unwrap();
    let f = fixture(HttpOptions {
        tools: true,
        static_dir: Some(ui.path().to_path_buf()),
        ..HttpOptions::default()
    });
    let (s, r) = json_of(
        &f.app,
        "POST",
        "/rpc",
        Some(json!({"jsonrpc": "2.0", "id": 7, "method": "tools/list"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["result"]["tools"].as_array().unwrap().len(), 5);
    let (s, r) = json_of(
        &f.app,
        "POST",
        "/rpc",
        Some(json!({"jsonrpc": "2.0", "id": 8, "method": "tools/call", "params": {"name": "iod.search_chunks", "arguments": {}}})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["error"]["code"], -32602);
    assert_eq!(
        send(
            &f.app,
            "POST",
            "/rpc",
            Some(json!({"jsonrpc": "2.0", "method": "ping"}))
        )
        .await
        .0,
        StatusCode::NO_CONTENT
    );
    let (s, body) = send(&f.app, "GET", "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, b"<html>ui</html>");
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_sessions_are_independent() {
    let f = Arc::new(fixture(HttpOptions::default()));
    let mut handles = Vec::new();
    for i in 0..4 {
        let f = f.clone();
        handles.push(tokio::spawn(async move {
            let d = &f.manifest.docs[i];
            let q = format!("What is the {} of {}?", d.facts[0].attribute, d.entity);
            let (_, created) = json_of(&f.app, "POST", "/sessions", Some(json!({"query": q}))).await;
            let id = created["id"].as_str().unwrap().to_string();
            send(&f.app, "POST", &format!("/sessions/{id}/confirm"), None).await;
            let events = read_events(&f.app, &id, None, None).await;
            (id, d.facts[0].value.clone(), events)
        }));
    }
    let mut ids = std::collections::BTreeSet::new();
    for h in handles {
        let (id, value, events) = h.await.unwrap();
        assert_eq!(events.last().unwrap().1, "report_ready");
        let rec = record(&f.app, &id).await;
        assert!(rec.report.unwrap().answer_text().contains(&value));
        ids.insert(id);
    }
    assert_eq!(ids.len(), 4);
}
