use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::extract::State;
use axum::http::{Request, Response, StatusCode};
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use trustzero_core::PUBKEY_PATH;

use crate::gateway::Gateway;

const MAX_BODY_BYTES: usize = 1 << 20;

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route(PUBKEY_PATH, get(pubkey))
        .fallback(proxy)
        .with_state(gateway)
}

async fn pubkey(State(gw): State<Arc<Gateway>>) -> impl IntoResponse {
    Json(gw.export_directory_entry())
}

async fn proxy(State(gw): State<Arc<Gateway>>, req: Request<Body>) -> Response<Body> {
    let (parts, body) = req.into_parts();
    let bytes = match axum::body::to_bytes(body, MAX_BODY_BYTES).await {
        Ok(b) => b,
        Err(_) => return StatusCode::PAYLOAD_TOO_LARGE.into_response(),
    };
    let (response, _) = gw.handle_request(Request::from_parts(parts, bytes)).await;
    response
}

/// A gateway serving on a local socket.
pub struct GatewayHandle {
    gateway: Arc<Gateway>,
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<std::io::Result<()>>>,
}

impl GatewayHandle {
    pub async fn spawn(gateway: Gateway, listen: SocketAddr) -> std::io::Result<Self> {
        let listener = TcpListener::bind(listen).await?;
        Self::spawn_on(gateway, listener)
    }

    pub fn spawn_on(gateway: Gateway, listener: TcpListener) -> std::io::Result<Self> {
        let addr = listener.local_addr()?;
        let gateway = Arc::new(gateway);
        let app = router(gateway.clone());
        let (tx, rx) = oneshot::channel();
        let task = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        });
        Ok(GatewayHandle { gateway, addr, shutdown: Some(tx), task: Some(task) })
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            if tokio::time::timeout(Duration::from_secs(5), task).await.is_err() {
                tracing::warn!(addr = %self.addr, "gateway did not stop within 5s");
            }
        }
    }
}

impl Drop for GatewayHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
