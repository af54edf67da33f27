//! HTTP job service for terrain style transfer: a style library, a persisted job
//! queue executed by a bounded worker pool, and server-sent progress streams.

mod api;
mod error;
mod jobs;
pub mod model;
mod store;

use std::net::SocketAddr;
use std::sync::Arc;

pub use api::{router, ApiError};
pub use error::{ServiceError, ServiceResult};
pub use jobs::{JobService, ServiceConfig, Subscription};
pub use store::Store;

/// Starts the service and serves HTTP on `addr` until the process ends.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let service = JobService::start(config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::clone(&service))).await
}
