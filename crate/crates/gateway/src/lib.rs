//! Standalone Limes service: a REST API in front of the module registry and
//! the function executor.

pub mod api;
pub mod config;
pub mod manager;
pub mod records;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

pub use config::ServiceConfig;
pub use manager::{Metrics, RuntimeManager, ServiceError};
pub use records::{InvocationRecord, InvocationStatus, TimingMs};

/// How long shutdown waits for in-flight invocations.
pub const DRAIN_TIMEOUT: Duration = Duration::from_secs(5);

/// Serves the API on `listener` until `shutdown` resolves, then drains
/// in-flight invocations for up to [`DRAIN_TIMEOUT`].
pub async fn serve(
    manager: Arc<RuntimeManager>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    let app = api::router(manager.clone());
    let (stop_tx, stop_rx) = tokio::sync::watch::channel(false);
    let server = tokio::spawn(async move {
        let mut rx = stop_rx;
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = rx.wait_for(|stop| *stop).await;
            })
            .await
    });
    shutdown.await;
    log::info!("shutting down; draining {} in-flight invocations", manager.in_flight());
    let _ = stop_tx.send(true);
    if !manager.drain(DRAIN_TIMEOUT).await {
        log::warn!("drain timed out with {} invocations in flight", manager.in_flight());
    }
    if tokio::time::timeout(Duration::from_millis(500), server).await.is_err() {
        log::warn!("connections still open after drain; closing");
    }
    manager.registry().flush()?;
    Ok(())
}

/// Binds `0.0.0.0:<listen_port>`.
pub async fn bind(config: &ServiceConfig) -> std::io::Result<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], config.listen_port))).await
}
