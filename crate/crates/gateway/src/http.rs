//! HTTP front end.
//!
//! | method | path | body / reply |
//! |---|---|---|
//! | `POST` | `/v1/jobs` | `{"requests": [JudgeRequest]}` → `{"job_ids": [..]}` |
//! | `GET` | `/v1/jobs/{id}?timeout_ms=N` | `JudgeResponse`, or `202 {"job_id", "status": "pending"}` |
//! | `GET` | `/v1/workers` | `{"workers": [WorkerLease], "queue_len", "dead_letters"}` |
//! | `GET` | `/v1/healthz` | `{"status": "ok"}`, or `503` when the broker is down |
//!
//! Errors are `{"error": code, "message": text}` plus `items` for
//! validation failures.

use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::{oneshot, Semaphore};

use crate::schema::{SubmitBody, SubmitReply};
use crate::service::{Gateway, GatewayError};

#[derive(Clone)]
struct AppState {
    gateway: Arc<Gateway>,
    /// Bounds blocking fetches so they cannot take every blocking thread.
    waiters: Arc<Semaphore>,
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let status = match &self {
            GatewayError::Invalid(_) | GatewayError::BadJobId(_) => StatusCode::BAD_REQUEST,
            GatewayError::BrokerDown(_) => StatusCode::SERVICE_UNAVAILABLE,
            GatewayError::QueueFull(_) => StatusCode::TOO_MANY_REQUESTS,
            GatewayError::UnknownJob(_) => StatusCode::NOT_FOUND,
            GatewayError::AlreadyConsumed(_) => StatusCode::CONFLICT,
            GatewayError::ChannelExpired(_) | GatewayError::DeadLettered(_) => StatusCode::GONE,
            GatewayError::JudgeFailed { .. } => StatusCode::BAD_GATEWAY,
            GatewayError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut body = json!({"error": self.code(), "message": self.to_string()});
        if let GatewayError::Invalid(items) = &self {
            body["items"] = json!(items);
        }
        (status, Json(body)).into_response()
    }
}

fn bad_body(message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({"error": "bad_body", "message": message}))).into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, GatewayError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| GatewayError::Internal(e.to_string()))
}

async fn submit(State(state): State<AppState>, body: Bytes) -> Response {
    let body: SubmitBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return bad_body(e.to_string()),
    };
    let gateway = state.gateway.clone();
    match blocking(move || gateway.submit(body.requests)).await.and_then(|r| r) {
        Ok(job_ids) => Json(SubmitReply { job_ids }).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Debug, Deserialize)]
struct FetchQuery {
    #[serde(default)]
    timeout_ms: u64,
}

async fn fetch(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<FetchQuery>) -> Response {
    let _permit = match state.waiters.clone().acquire_owned().await {
        Ok(p) => p,
        Err(_) => return GatewayError::Internal("wait pool closed".into()).into_response(),
    };
    let gateway = state.gateway.clone();
    let handle = id.clone();
    let timeout = Duration::from_millis(q.timeout_ms);
    match blocking(move || gateway.fetch(&handle, timeout)).await.and_then(|r| r) {
        Ok(Some(response)) => Json(response).into_response(),
        Ok(None) => (StatusCode::ACCEPTED, Json(json!({"job_id": id, "status": "pending"}))).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn workers(State(state): State<AppState>) -> Response {
    let gateway = state.gateway.clone();
    match blocking(move || gateway.workers()).await.and_then(|r| r) {
        Ok(reply) => Json(reply).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn healthz(State(state): State<AppState>) -> Response {
    let gateway = state.gateway.clone();
    match blocking(move || gateway.health()).await.and_then(|r| r) {
        Ok(()) => Json(json!({"status": "ok"})).into_response(),
        Err(e) => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({"status": "unavailable", "error": e.code(), "message": e.to_string()})),
        )
            .into_response(),
    }
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    let waiters = Arc::new(Semaphore::new(gateway.config().max_waiters.max(1)));
    Router::new()
        .route("/v1/jobs", post(submit))
        .route("/v1/jobs/{id}", get(fetch))
        .route("/v1/workers", get(workers))
        .route("/v1/healthz", get(healthz))
        .with_state(AppState { gateway, waiters })
}

/// Serve until `shutdown` resolves, reaping dead workers every sweep
/// interval.
pub async fn serve(
    listener: tokio::net::TcpListener,
    gateway: Arc<Gateway>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    let sweeper = {
        let gateway = gateway.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(gateway.config().sweep_interval);
            tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                tick.tick().await;
                let g = gateway.clone();
                match tokio::task::spawn_blocking(move || g.sweep()).await {
                    Ok(Ok(ids)) if !ids.is_empty() => tracing::info!(requeued = ?ids, "reaped dead workers"),
                    Ok(Err(e)) => tracing::warn!(error = %e, "sweep failed"),
                    _ => {}
                }
            }
        })
    };
    let result = axum::serve(listener, router(gateway)).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    result
}

/// Build a runtime sized for the gateway's wait pool.
pub fn runtime(gateway: &Gateway) -> io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .max_blocking_threads(gateway.config().max_waiters.max(1) + 64)
        .build()
}

/// A gateway served from a background thread. Dropping it shuts the server
/// down.
#[derive(Debug)]
pub struct RunningGateway {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<io::Result<()>>>,
}

impl RunningGateway {
    pub fn start(bind: &str, gateway: Arc<Gateway>) -> io::Result<Self> {
        let rt = runtime(&gateway)?;
        let listener = rt.block_on(tokio::net::TcpListener::bind(bind))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::Builder::new().name("gateway".into()).spawn(move || {
            rt.block_on(serve(listener, gateway, async {
                let _ = rx.await;
            }))
        })?;
        Ok(RunningGateway { addr, stop: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stop and wait for the server thread.
    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(io::Error::other("gateway thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for RunningGateway {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}
