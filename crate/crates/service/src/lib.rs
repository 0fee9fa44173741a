//! HTTP front end that runs simulated molecular MIMO transmissions as live
//! sessions.
//!
//! A session holds one link configuration. Posting a message simulates the
//! whole frame up front and then replays its event log on a scaled clock
//! (60 simulated seconds per wall-clock second by default), so every event a
//! client sees is a pure function of the finished [`LinkReport`].
//!
//! | Method | Path | Body / query | Reply |
//! |---|---|---|---|
//! | `POST` | `/api/sessions` | config overrides, `?time_scale=` | `{id}` |
//! | `GET` | `/api/sessions/{id}` | | state summary |
//! | `POST` | `/api/sessions/{id}/message` | `{text}` | `202` |
//! | `GET` | `/api/sessions/{id}/report` | | link report |
//! | `GET` | `/api/sessions/{id}/events` | `?from=N` | server-sent events |
//!
//! Each event is sent as `{seq, kind, t_sim, data}` with the SSE id set to
//! `seq`. When the log is complete the stream ends with an `end` event
//! carrying `{next, state}`; reconnecting with `from=next` resumes exactly
//! where the previous connection stopped. Errors are `{error, detail}` with
//! status 400, 404 or 409.
//!
//! ```no_run
//! # async fn demo() -> std::io::Result<()> {
//! let listener = tokio::net::TcpListener::bind("127.0.0.1:8080").await?;
//! molmimo_service::serve(listener, Default::default()).await
//! # }
//! ```
//!
//! [`LinkReport`]: molmimo::harness::LinkReport

pub mod error;
pub mod events;
pub mod session;

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{self, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use molmimo::harness::ConfigOverrides;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::mpsc;
use tokio_stream::wrappers::ReceiverStream;

pub use error::ServiceError;
pub use events::{event_log, Event, EventKind};
pub use session::{Registry, ServiceConfig, SessionInfo, SessionState};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/live-api.md")]
mod book_live_api {}

type AppState = Arc<Registry>;

/// Router over a fresh registry.
pub fn app(config: ServiceConfig) -> Router {
    router(Arc::new(Registry::new(config)))
}

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(session_info))
        .route("/api/sessions/{id}/message", post(send_message))
        .route("/api/sessions/{id}/report", get(report))
        .route("/api/sessions/{id}/events", get(events))
        .with_state(registry)
}

/// Serves the API on `listener` until the process exits.
pub async fn serve(
    listener: tokio::net::TcpListener,
    config: ServiceConfig,
) -> std::io::Result<()> {
    axum::serve(listener, app(config)).await
}

fn parse_json<T: serde::de::DeserializeOwned + Default>(body: &Bytes) -> Result<T, ServiceError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ServiceError::Validation(e.to_string()))
}

#[derive(Debug, Default, Deserialize)]
struct CreateQuery {
    time_scale: Option<f64>,
}

async fn create_session(
    State(reg): State<AppState>,
    Query(q): Query<CreateQuery>,
    body: Bytes,
) -> Result<impl IntoResponse, ServiceError> {
    let overrides: ConfigOverrides = parse_json(&body)?;
    let s = reg.create(&overrides, q.time_scale)?;
    Ok((StatusCode::CREATED, Json(json!({ "id": s.id }))))
}

async fn session_info(
    State(reg): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionInfo>, ServiceError> {
    Ok(Json(reg.get(&id)?.info()))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    text: String,
}

async fn send_message(
    State(reg): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ServiceError> {
    reg.get(&id)?;
    let msg: MessageBody =
        serde_json::from_slice(&body).map_err(|e| ServiceError::Validation(e.to_string()))?;
    reg.send_message(&id, &msg.text)?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "id": id, "state": SessionState::Transmitting })),
    ))
}

async fn report(
    State(reg): State<AppState>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ServiceError> {
    let r = reg.get(&id)?.report()?;
    Ok(Json(r))
}

#[derive(Debug, Default, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    from: u64,
}

async fn events(
    State(reg): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> Result<Sse<impl Stream<Item = Result<sse::Event, Infallible>>>, ServiceError> {
    let session = reg.get(&id)?;
    let (tx, rx) = mpsc::channel(64);
    tokio::spawn(async move {
        let mut published = session.subscribe();
        let mut next = q.from;
        loop {
            published.borrow_and_update();
            let view = session.view_from(next);
            for e in &view.events {
                let msg = sse::Event::default()
                    .event(
                        serde_json::to_value(e.kind)
                            .unwrap()
                            .as_str()
                            .unwrap_or("event"),
                    )
                    .id(e.seq.to_string())
                    .json_data(e)
                    .expect("events serialize");
                if tx.send(Ok(msg)).await.is_err() {
                    return;
                }
                next = e.seq + 1;
            }
            if view.state.is_terminal() && view.events.is_empty() {
                let mut end = json!({ "next": next, "state": view.state });
                if let Some(f) = view.failure {
                    end["detail"] = f.into();
                }
                let msg = sse::Event::default()
                    .event("end")
                    .json_data(end)
                    .expect("json");
                let _ = tx.send(Ok(msg)).await;
                return;
            }
            if view.events.is_empty() && published.changed().await.is_err() {
                return;
            }
        }
    });
    Ok(Sse::new(ReceiverStream::new(rx)).keep_alive(KeepAlive::default()))
}
