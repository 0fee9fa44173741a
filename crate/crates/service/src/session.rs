//! Sessions: one configured link, one message, one append-only event log.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use molmimo::harness::{run_link, ConfigOverrides, LinkReport, RunConfig};
use molmimo::protocol::encode_text;
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

use crate::error::ServiceError;
use crate::events::{event_log, Event};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Idle,
    Transmitting,
    Done,
    Failed,
}

impl SessionState {
    pub fn is_terminal(self) -> bool {
        matches!(self, SessionState::Done | SessionState::Failed)
    }
}

/// Service-wide settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceConfig {
    /// Default simulated seconds per wall-clock second.
    pub time_scale: f64,
    /// Voltage sample events per receiver and simulated second.
    pub sample_cap: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            time_scale: 60.0,
            sample_cap: crate::events::DEFAULT_SAMPLE_CAP,
        }
    }
}

#[derive(Debug)]
struct Inner {
    state: SessionState,
    log: Vec<Event>,
    report: Option<LinkReport>,
    failure: Option<String>,
}

/// Snapshot handed to stream readers.
#[derive(Debug, Clone)]
pub struct LogView {
    pub events: Vec<Event>,
    pub state: SessionState,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub state: SessionState,
    pub events: usize,
    pub time_scale: f64,
    pub config: RunConfig,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub config: RunConfig,
    /// Simulated seconds per wall-clock second for this session.
    pub time_scale: f64,
    inner: Mutex<Inner>,
    // Number of published events; bumped on every append and state change.
    published: watch::Sender<usize>,
}

impl Session {
    fn new(id: String, config: RunConfig, time_scale: f64) -> Self {
        Session {
            id,
            config,
            time_scale,
            inner: Mutex::new(Inner {
                state: SessionState::Idle,
                log: Vec::new(),
                report: None,
                failure: None,
            }),
            published: watch::channel(0).0,
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn state(&self) -> SessionState {
        self.lock().state
    }

    pub fn info(&self) -> SessionInfo {
        let g = self.lock();
        SessionInfo {
            id: self.id.clone(),
            state: g.state,
            events: g.log.len(),
            time_scale: self.time_scale,
            config: self.config.clone(),
        }
    }

    pub fn report(&self) -> Result<LinkReport, ServiceError> {
        let g = self.lock();
        match (&g.report, g.state) {
            (Some(r), SessionState::Done) => Ok(r.clone()),
            (_, SessionState::Failed) => Err(ServiceError::Conflict(format!(
                "transmission failed: {}",
                g.failure.as_deref().unwrap_or("unknown error")
            ))),
            (_, s) => Err(ServiceError::Conflict(
                format!("no report yet, session is {s:?}").to_lowercase(),
            )),
        }
    }

    /// Published events from `from` onwards, with the state at that instant.
    pub fn view_from(&self, from: u64) -> LogView {
        let g = self.lock();
        let from = (from as usize).min(g.log.len());
        LogView {
            events: g.log[from..].to_vec(),
            state: g.state,
            failure: g.failure.clone(),
        }
    }

    pub fn subscribe(&self) -> watch::Receiver<usize> {
        self.published.subscribe()
    }

    fn publish(&self, e: Event) {
        let n = {
            let mut g = self.lock();
            g.log.push(e);
            g.log.len()
        };
        self.published.send_replace(n);
    }

    fn finish(&self, outcome: Result<LinkReport, String>) {
        let n = {
            let mut g = self.lock();
            match outcome {
                Ok(r) => {
                    g.report = Some(r);
                    g.state = SessionState::Done;
                }
                Err(e) => {
                    g.failure = Some(e);
                    g.state = SessionState::Failed;
                }
            }
            g.log.len()
        };
        self.published.send_replace(n);
    }
}

/// All live sessions.
#[derive(Debug, Default)]
pub struct Registry {
    sessions: Mutex<HashMap<String, Arc<Session>>>,
    next_id: AtomicU64,
    pub config: ServiceConfig,
}

impl Registry {
    pub fn new(config: ServiceConfig) -> Self {
        Registry {
            config,
            ..Registry::default()
        }
    }

    /// New idle session; `time_scale` defaults to the service setting.
    pub fn create(
        &self,
        overrides: &ConfigOverrides,
        time_scale: Option<f64>,
    ) -> Result<Arc<Session>, ServiceError> {
        let config = overrides.resolve()?;
        let time_scale = time_scale.unwrap_or(self.config.time_scale);
        if !(time_scale.is_finite() && time_scale > 0.0) {
            return Err(ServiceError::Validation(
                "time_scale must be positive".into(),
            ));
        }
        let n = self.next_id.fetch_add(1, Ordering::Relaxed) + 1;
        let s = Arc::new(Session::new(format!("s{n}"), config, time_scale));
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(s.id.clone(), s.clone());
        Ok(s)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>, ServiceError> {
        self.sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no session {id:?}")))
    }

    /// Validates `text`, moves the session to transmitting, and spawns the
    /// run: the link is simulated to completion first, then its event log is
    /// paced out on the scaled clock.
    pub fn send_message(&self, id: &str, text: &str) -> Result<(), ServiceError> {
        let session = self.get(id)?;
        encode_text(text, session.config.mode)?;
        {
            let mut g = session.lock();
            if g.state != SessionState::Idle {
                return Err(ServiceError::Conflict(format!(
                    "session {id} already has a message in flight or finished"
                )));
            }
            g.state = SessionState::Transmitting;
        }
        let cfg = RunConfig {
            message: text.to_string(),
            ..session.config.clone()
        };
        let sample_cap = self.config.sample_cap;
        tokio::spawn(async move {
            let run = tokio::task::spawn_blocking(move || run_link(&cfg)).await;
            let report = match run {
                Ok(Ok(r)) => r,
                Ok(Err(e)) => return session.finish(Err(e.to_string())),
                Err(e) => return session.finish(Err(e.to_string())),
            };
            let log = event_log(&report, sample_cap);
            let start = tokio::time::Instant::now();
            for e in log {
                let due = Duration::from_secs_f64((e.t_sim / session.time_scale).max(0.0));
                tokio::time::sleep_until(start + due).await;
                session.publish(e);
            }
            session.finish(Ok(report));
        });
        Ok(())
    }
}
