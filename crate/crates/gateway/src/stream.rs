//! `GET /v1/stream`: the caller's events as newline-delimited JSON.
//!
//! The response starts with a replay from the resume token (or from the
//! earliest retained event) and then follows live events. A blank line goes
//! out when the stream has been idle for a while so intermediaries keep the
//! connection open.

use std::collections::VecDeque;
use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{header, HeaderValue};
use axum::response::{IntoResponse, Response};
use e112_core::events::StreamEvent;
use e112_core::ids::UserId;
use e112_core::Service;
use serde::Deserialize;
use tokio::sync::watch;

use crate::extract::{Auth, Params};
use crate::state::AppState;

pub const REPLAY_HEADER: &str = "x-e112-replay";
const KEEPALIVE: Duration = Duration::from_secs(15);

#[derive(Debug, Deserialize)]
pub struct StreamQuery {
    pub resume_token: Option<String>,
    /// `false` ends the response after the replay.
    pub follow: Option<bool>,
}

struct Cursor {
    svc: Arc<Service>,
    user: UserId,
    rx: watch::Receiver<u64>,
    token: Option<String>,
    pending: VecDeque<Bytes>,
    follow: bool,
}

fn encode(events: &[StreamEvent]) -> Option<Bytes> {
    if events.is_empty() {
        return None;
    }
    let mut buf = Vec::new();
    for e in events {
        serde_json::to_writer(&mut buf, e).expect("events serialize");
        buf.push(b'\n');
    }
    Some(Bytes::from(buf))
}

impl Cursor {
    fn catch_up(&mut self) {
        let replay = self.svc.events().replay(&self.user, self.token.as_deref());
        if let Some(last) = replay.events.last() {
            self.token = Some(last.resume_token.clone());
        }
        self.pending.extend(encode(&replay.events));
    }
}

pub async fn stream(State(st): State<AppState>, Auth(who): Auth, Params(q): Params<StreamQuery>) -> Response {
    let svc = st.svc.clone();
    // Subscribe first so nothing published during the replay is missed.
    let rx = svc.events().subscribe(&who.user_id);
    let replay = svc.events().replay(&who.user_id, q.resume_token.as_deref());
    let token = match replay.events.last() {
        Some(e) => Some(e.resume_token.clone()),
        None if replay.token_accepted => q.resume_token.clone(),
        None => None,
    };
    let mode = if replay.token_accepted && q.resume_token.is_some() { "resumed" } else { "full" };
    let cursor = Cursor {
        svc,
        user: who.user_id,
        rx,
        token,
        pending: encode(&replay.events).into_iter().collect(),
        follow: q.follow.unwrap_or(true),
    };
    let body = futures::stream::unfold(cursor, |mut c| async move {
        loop {
            if let Some(chunk) = c.pending.pop_front() {
                return Some((Ok::<_, Infallible>(chunk), c));
            }
            if !c.follow {
                return None;
            }
            match tokio::time::timeout(KEEPALIVE, c.rx.changed()).await {
                Ok(Ok(())) => c.catch_up(),
                Ok(Err(_)) => return None,
                Err(_) => return Some((Ok(Bytes::from_static(b"\n")), c)),
            }
        }
    });
    let mut resp = Body::from_stream(body).into_response();
    let headers = resp.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/x-ndjson"));
    headers.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    headers.insert(REPLAY_HEADER, HeaderValue::from_static(mode));
    resp
}
