use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use molmimo::harness::{run_link, ConfigOverrides};
use molmimo_service::{app, event_log, Event, EventKind, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

const FAST: f64 = 1e6;

fn service() -> Router {
    app(ServiceConfig::default())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

async fn create(app: &Router, overrides: Value, time_scale: f64) -> String {
    let (s, v) = call(
        app,
        "POST",
        &format!("/api/sessions?time_scale={time_scale}"),
        Some(overrides),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn send(app: &Router, id: &str, text: &str) -> (StatusCode, Value) {
    call(
        app,
        "POST",
        &format!("/api/sessions/{id}/message"),
        Some(json!({ "text": text })),
    )
    .await
}

async fn wait_done(app: &Router, id: &str) {
    for _ in 0..2000 {
        let (_, info) = call(app, "GET", &format!("/api/sessions/{id}"), None).await;
        if info["state"] == "done" || info["state"] == "failed" {
            return;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("session {id} never finished");
}

#[derive(Debug, PartialEq)]
enum Frame {
    Ev(Event),
    End(Value),
}

fn parse_sse(chunk: &str, out: &mut Vec<Frame>) {
    for block in chunk.split("\n\n").filter(|b| !b.trim().is_empty()) {
        let mut name = "";
        let mut data = String::new();
        for line in block.lines() {
            if let Some(n) = line.strip_prefix("event:") {
                name = n.trim();
            } else if let Some(d) = line.strip_prefix("data:") {
                data.push_str(d.trim_start());
            }
        }
        if data.is_empty() {
            continue;
        }
        out.push(if name == "end" {
            Frame::End(serde_json::from_str(&data).unwrap())
        } else {
            Frame::Ev(serde_json::from_str(&data).unwrap())
        });
    }
}

/// Reads the event stream from `from`, stopping after `limit` events if given.
async fn stream(app: &Router, id: &str, from: u64, limit: Option<usize>) -> Vec<Frame> {
    let req = Request::get(format!("/api/sessions/{id}/events?from={from}"))
        .body(Body::empty())
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let mut body = res.into_body();
    let mut buf = String::new();
    let mut frames = Vec::new();
    while let Some(frame) = body.frame().await {
        if let Ok(data) = frame.unwrap().into_data() {
            buf.push_str(std::str::from_utf8(&data).unwrap());
        }
        // only parse complete blocks
        if let Some(cut) = buf.rfind("\n\n") {
            let done: String = buf.drain(..cut + 2).collect();
            parse_sse(&done, &mut frames);
        }
        if limit.is_some_and(|n| frames.len() >= n) {
            frames.truncate(limit.unwrap());
            break;
        }
    }
    frames
}

fn events(frames: Vec<Frame>) -> Vec<Event> {
    frames
        .into_iter()
        .filter_map(|f| match f {
            Frame::Ev(e) => Some(e),
            Frame::End(_) => None,
        })
        .collect()
}

fn expected_log(overrides: Value, text: &str) -> Vec<Event> {
    let o: ConfigOverrides = serde_json::from_value(overrides).unwrap();
    let mut cfg = o.resolve().unwrap();
    cfg.message = text.into();
    event_log(
        &run_link(&cfg).unwrap(),
        ServiceConfig::default().sample_cap,
    )
}

#[tokio::test]
async fn empty_overrides_give_defaults() {
    let app = service();
    let (s, v) = call(&app, "POST", "/api/sessions", None).await;
    assert_eq!(s, StatusCode::CREATED);
    let id = v["id"].as_str().unwrap();
    let (_, info) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(info["state"], "idle");
    assert_eq!(info["time_scale"], 60.0);
    assert_eq!(info["config"]["mode"], "mimo");
    assert_eq!(info["config"]["timing"]["symbol_period"], 3.8);
}

#[tokio::test]
async fn invalid_overrides_are_400() {
    let app = service();
    for body in [
        json!({ "seed": "one" }),
        json!({ "unknown": 1 }),
        json!({ "channel": { "diffusivity": -1.0, "drift": [1, 0, 0], "molecules_per_burst": 1e18, "burst_duration": 0.1 } }),
    ] {
        let (s, v) = call(&app, "POST", "/api/sessions", Some(body.clone())).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(v["error"], "validation");
        assert!(v["detail"].is_string());
    }
    let (s, _) = call(&app, "POST", "/api/sessions?time_scale=0", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_session_is_404() {
    let app = service();
    for (m, path) in [
        ("GET", "/api/sessions/nope"),
        ("GET", "/api/sessions/nope/report"),
        ("GET", "/api/sessions/nope/events"),
    ] {
        let (s, v) = call(&app, m, path, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{path}");
        assert_eq!(v["error"], "not_found");
    }
    let (s, _) = send(&app, "nope", "abc").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unsupported_text_is_400_and_session_stays_idle() {
    let app = service();
    let id = create(&app, json!({}), FAST).await;
    for text in ["", "a#b", "é"] {
        let (s, v) = send(&app, &id, text).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{text:?}");
        assert_eq!(v["error"], "validation");
    }
    let (_, info) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(info["state"], "idle");
}

#[tokio::test]
async fn second_message_conflicts() {
    let app = service();
    let id = create(&app, json!({}), 1.0).await;
    assert_eq!(send(&app, &id, "abc").await.0, StatusCode::ACCEPTED);
    let (s, v) = send(&app, &id, "def").await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "conflict");
    let (s, _) = call(&app, "GET", &format!("/api/sessions/{id}/report"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn mimo_abcdef_session() {
    let app = service();
    let id = create(&app, json!({}), FAST).await;
    send(&app, &id, "abcdef").await;
    let log = events(stream(&app, &id, 0, None).await);
    let chars: Vec<(u64, &str)> = log
        .iter()
        .filter(|e| e.kind == EventKind::Char)
        .map(|e| {
            (
                e.data["rx"].as_u64().unwrap(),
                e.data["char"].as_str().unwrap(),
            )
        })
        .collect();
    assert_eq!(
        chars,
        [(0, "a"), (1, "b"), (0, "c"), (1, "d"), (0, "e"), (1, "f")]
    );
    let done = log.last().unwrap();
    assert_eq!(done.kind, EventKind::FrameDone);
    assert_eq!(done.data["air_time_s"], 63.0);

    let (s, report) = call(&app, "GET", &format!("/api/sessions/{id}/report"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(report, done.data);
    assert_eq!(report["per_receiver"], json!(["ace", "bdf"]));
}

#[tokio::test]
async fn live_log_equals_offline_log() {
    let app = service();
    let overrides = json!({ "mode": "siso", "seed": 5, "sensor": {
        "gain": 5e-19, "response_time": 0.5, "noise_sigma": 0.05, "saturation": 5.0, "sample_rate": 10.0 } });
    let id = create(&app, overrides.clone(), FAST).await;
    send(&app, &id, "hi there").await;
    let live = events(stream(&app, &id, 0, None).await);
    assert_eq!(live, expected_log(overrides, "hi there"));
    assert!(live.iter().enumerate().all(|(i, e)| e.seq == i as u64));
}

#[tokio::test]
async fn reconnect_mid_transmission_has_no_gaps() {
    let app = service();
    // ~100 simulated seconds at 100x: about a second of wall time.
    let id = create(&app, json!({}), 100.0).await;
    send(&app, &id, "abcdef").await;
    let first = events(stream(&app, &id, 0, Some(300)).await);
    let (_, info) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(info["state"], "transmitting");
    let next = first.last().unwrap().seq + 1;
    let rest = stream(&app, &id, next, None).await;
    let Some(Frame::End(end)) = rest.last() else {
        panic!("no closing marker")
    };
    assert_eq!(end["state"], "done");
    let mut joined = first;
    joined.extend(events(rest));
    assert_eq!(joined, expected_log(json!({}), "abcdef"));
}

#[tokio::test]
async fn finished_session_replays_and_closes() {
    let app = service();
    let id = create(&app, json!({ "mode": "siso" }), FAST).await;
    send(&app, &id, "ok").await;
    wait_done(&app, &id).await;
    let full = stream(&app, &id, 0, None).await;
    let n = full.len() as u64 - 1;
    assert!(matches!(full.last(), Some(Frame::End(e)) if e["next"] == n));
    let tail = stream(&app, &id, n, None).await;
    assert_eq!(tail.len(), 1);
    assert!(matches!(&tail[0], Frame::End(e) if e["state"] == "done"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_stay_isolated() {
    let app = service();
    let jobs: Vec<(Value, &str)> = vec![
        (json!({ "seed": 1 }), "abcdef"),
        (json!({ "seed": 2, "mode": "siso" }), "xyz"),
        (json!({ "seed": 3 }), "hello, world"),
        (json!({ "seed": 4, "mode": "siso" }), "q?"),
        (json!({ "seed": 5 }), "parallel."),
        (json!({ "seed": 6 }), "zz top"),
    ];
    let handles: Vec<_> = jobs
        .into_iter()
        .map(|(o, text)| {
            let app = app.clone();
            tokio::spawn(async move {
                let id = create(&app, o.clone(), 2000.0).await;
                send(&app, &id, text).await;
                let log = events(stream(&app, &id, 0, None).await);
                assert_eq!(log, expected_log(o, text), "session {id}");
            })
        })
        .collect();
    for h in handles {
        h.await.unwrap();
    }
}
