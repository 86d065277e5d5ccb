//! Session-oriented HTTP API over an [`Engine`].
//!
//! - [`api`]: routes and bodies
//! - [`store`]: live sessions, per-session locking, snapshots, expiry
//! - [`events`]: the JSON Lines event log and its replay

pub mod api;
pub mod events;
pub mod store;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use oraldx_core::engine::Engine;

pub use api::{router, ApiError, ErrorCode};
pub use events::{parse_log, read_log, replay, Event, EventKind};
pub use store::{SessionStore, StoreConfig, StoreError};

/// Carried by every response body.
pub const SCHEMA_VERSION: u32 = 1;

/// Serves until `shutdown` resolves, then writes a snapshot.
pub async fn serve(
    engine: Arc<Engine>,
    config: StoreConfig,
    addr: SocketAddr,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    let sweep = (config.idle_timeout / 4).clamp(Duration::from_millis(10), Duration::from_secs(60));
    let store = Arc::new(SessionStore::open(engine, config)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, sessions = store.len(), "listening");

    let sweeper = {
        let store = store.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(sweep);
            loop {
                tick.tick().await;
                match store.expire_idle() {
                    Ok(0) => {}
                    Ok(n) => tracing::info!(expired = n, "expired idle sessions"),
                    Err(e) => tracing::error!(error = %e, "expiry failed"),
                }
            }
        })
    };

    axum::serve(listener, router(store.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    sweeper.abort();
    if let Some(path) = store.snapshot()? {
        tracing::info!(path = %path.display(), "snapshot written");
    }
    Ok(())
}
