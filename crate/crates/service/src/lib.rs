//! HTTP front end for interactive counterfactual search. A person (or a
//! local classifier) answers each query; sessions are logged to disk and
//! survive restarts.

pub mod api;
pub mod error;
pub mod models;
pub mod render;
pub mod session;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::response::Html;
use axum::routing::get;
use axum::Router;
use tower_http::services::ServeDir;

pub use api::AppState;
pub use error::{Result, ServiceError};
pub use models::ModelSet;
pub use session::SessionManager;

const INDEX_HTML: &str = include_str!("../assets/index.html");

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub session_dir: PathBuf,
    /// Static client files served at `/`; a placeholder page otherwise.
    pub assets_dir: Option<PathBuf>,
    pub session_ttl: Option<Duration>,
    pub label_wait: Duration,
}

impl ServerConfig {
    pub fn new(addr: SocketAddr, session_dir: impl Into<PathBuf>) -> Self {
        Self {
            addr,
            session_dir: session_dir.into(),
            assets_dir: None,
            session_ttl: Some(Duration::from_secs(24 * 3600)),
            label_wait: Duration::from_secs(5),
        }
    }
}

/// `/api/v1` plus static assets at `/`.
pub fn router(state: AppState, assets_dir: Option<PathBuf>) -> Router {
    let app = Router::new().nest("/api/v1", api::api_router(state));
    match assets_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(INDEX_HTML) })),
    }
}

/// Restarts local-oracle sessions that were interrupted.
pub fn resume_local_sessions(sessions: &Arc<SessionManager>) {
    for id in sessions.local_unfinished() {
        api::spawn_local(sessions.clone(), id);
    }
}

/// Serves until Ctrl-C, then drains in-flight requests.
pub async fn serve(models: ModelSet, config: ServerConfig) -> Result<()> {
    let dir = config.session_dir.clone();
    let ttl = config.session_ttl;
    let models = Arc::new(models);
    let sessions = tokio::task::spawn_blocking(move || SessionManager::open(models, dir, ttl))
        .await
        .map_err(|e| ServiceError::Setup(e.to_string()))??;
    let sessions = Arc::new(sessions);
    resume_local_sessions(&sessions);
    let state = AppState {
        sessions,
        label_wait: config.label_wait,
    };
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    let local = listener.local_addr()?;
    tracing::info!(addr = %local, "listening");
    for (method, path) in api::ENDPOINTS {
        tracing::info!("  {method:<5} /api/v1{path}");
    }
    tracing::info!("  GET   / (static assets)");
    axum::serve(listener, router(state, config.assets_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;
    Ok(())
}
