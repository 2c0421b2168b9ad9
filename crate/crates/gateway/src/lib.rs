//! HTTP+JSON API for the e112 service.
//!
//! Every endpoint lives under `/v1`, takes and returns JSON, and identifies
//! the caller by a bearer session token. Failures share one body shape,
//! `{code, message, details}`.

pub mod api;
pub mod config;
pub mod error;
pub mod extract;
pub mod inspect;
pub mod server;
pub mod state;
pub mod stream;

use axum::routing::get;
use axum::Router;

pub use config::{Settings, StoreSpec};
pub use error::{ApiError, ErrorBody};
pub use server::{build_state, serve, Server, StartError};
pub use state::AppState;

/// Largest accepted request body; media uploads are checked again against
/// the service's own limit.
const BODY_LIMIT: usize = 64 * 1024 * 1024;

pub fn router(state: AppState) -> Router {
    let mut v1 = api::routes().route("/stream", get(stream::stream));
    if state.fakes.is_some() {
        v1 = v1.nest("/_inspect", inspect::routes());
    }
    Router::new()
        .nest("/v1", v1)
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(axum::extract::DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}
