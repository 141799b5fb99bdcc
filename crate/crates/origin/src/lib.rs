//! Minimal login server placed behind a gateway in tests and experiments.
//!
//! It accepts `POST` of `{"username": .., "password": ..}` on the configured
//! login paths and answers 200 when the pair is one of the fixtures, 401
//! otherwise, 400 for anything that is not such a JSON object. Every request
//! other than the health and counter probes bumps a counter readable at
//! `GET /.test/count`, which tests use to prove denied requests never arrived.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub const COUNT_PATH: &str = "/.test/count";
pub const HEALTH_PATH: &str = "/health";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub username: String,
    pub password: String,
}

impl Credential {
    pub fn new(username: impl Into<String>, password: impl Into<String>) -> Self {
        Credential { username: username.into(), password: password.into() }
    }

    fn is_well_formed(&self) -> bool {
        !self.username.is_empty() && !self.password.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OriginConfig {
    pub listen_addr: SocketAddr,
    pub login_paths: Vec<String>,
    pub fixtures: Vec<Credential>,
}

impl Default for OriginConfig {
    fn default() -> Self {
        OriginConfig {
            listen_addr: SocketAddr::from(([127, 0, 0, 1], 0)),
            login_paths: vec!["/login".into(), "/resource".into()],
            fixtures: vec![Credential::new("John Doe", "johndoe")],
        }
    }
}

#[derive(Clone)]
struct AppState {
    fixtures: Arc<Vec<Credential>>,
    counter: Arc<AtomicU64>,
}

/// Builds the router. `counter` is shared with the caller so in-process tests
/// can read it without going through HTTP.
pub fn router(config: &OriginConfig, counter: Arc<AtomicU64>) -> Router {
    let state = AppState { fixtures: Arc::new(config.fixtures.clone()), counter };
    let mut app = Router::new()
        .route(HEALTH_PATH, get(|| async { "ok" }))
        .route(COUNT_PATH, get(count));
    for path in &config.login_paths {
        app = app.route(path, post(login));
    }
    app.fallback(not_found).with_state(state)
}

async fn count(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "count": state.counter.load(Ordering::SeqCst) }))
}

async fn login(State(state): State<AppState>, body: Bytes) -> Response {
    state.counter.fetch_add(1, Ordering::SeqCst);
    let cred: Credential = match serde_json::from_slice(&body) {
        Ok(c) => c,
        Err(e) => {
            return (StatusCode::BAD_REQUEST, Json(json!({ "ok": false, "error": e.to_string() }))).into_response();
        }
    };
    if !cred.is_well_formed() {
        return (StatusCode::BAD_REQUEST, Json(json!({ "ok": false, "error": "empty username or password" })))
            .into_response();
    }
    if state.fixtures.contains(&cred) {
        (StatusCode::OK, Json(json!({ "ok": true }))).into_response()
    } else {
        (StatusCode::UNAUTHORIZED, Json(json!({ "ok": false }))).into_response()
    }
}

async fn not_found(State(state): State<AppState>) -> StatusCode {
    state.counter.fetch_add(1, Ordering::SeqCst);
    StatusCode::NOT_FOUND
}

/// A running origin server.
pub struct OriginHandle {
    addr: SocketAddr,
    counter: Arc<AtomicU64>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<std::io::Result<()>>>,
}

impl OriginHandle {
    pub async fn spawn(config: OriginConfig) -> std::io::Result<OriginHandle> {
        let listener = TcpListener::bind(config.listen_addr).await?;
        Self::spawn_on(listener, config)
    }

    pub fn spawn_on(listener: TcpListener, config: OriginConfig) -> std::io::Result<OriginHandle> {
        let addr = listener.local_addr()?;
        let counter = Arc::new(AtomicU64::new(0));
        let app = router(&config, counter.clone());
        let (tx, rx) = oneshot::channel();
        let task = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        });
        Ok(OriginHandle { addr, counter, shutdown: Some(tx), task: Some(task) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests that reached the origin, excluding probes.
    pub fn request_count(&self) -> u64 {
        self.counter.load(Ordering::SeqCst)
    }

    pub async fn shutdown(mut self) {
        self.stop().await;
    }

    async fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            // idle keep-alive connections close promptly; don't hang on a stuck one
            if tokio::time::timeout(std::time::Duration::from_secs(5), task).await.is_err() {
                tracing::warn!(addr = %self.addr, "origin did not stop within 5s");
            }
        }
    }
}

impl Drop for OriginHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
