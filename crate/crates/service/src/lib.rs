//! HTTP API over a directory of native logs.
//!
//! Log endpoints are read-only and reflect the working copy of an open edit
//! session when there is one. Edits go through sessions; a log has at most
//! one open session, and sessions idle for [`SESSION_TTL`] are dropped.

mod api;
mod error;
mod state;

use std::net::SocketAddr;

pub use api::{router, FilterQuery, RayPayload, SessionView, Wireframe, RAY_UNIT_TOLERANCE};
pub use error::{ApiError, ApiResult};
pub use state::{AppState, SESSION_TTL};

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "serving logs from {} on http://{}",
        state.data_root().display(),
        listener.local_addr()?
    );
    axum::serve(listener, router(state)).await
}
