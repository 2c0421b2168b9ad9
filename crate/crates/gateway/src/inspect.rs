//! `/v1/_inspect/*`: test-only views into the provider fakes. Mounted only
//! when the server runs with fault injection enabled.

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use e112_core::identity::{ProvisionedUser, SessionGrant};
use e112_core::model::{Phone, Role};
use e112_core::providers::{PushRecord, SmsRecord};
use e112_core::Error;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::extract::{blocking, Body, Params};
use crate::state::{AppState, Fakes};

pub fn routes() -> Router<AppState> {
    Router::new()
        .route("/sms", get(sms_outbox))
        .route("/push", get(push_log))
        .route("/devices", post(register_device))
        .route("/faults", post(set_faults))
        .route("/operators", post(provision_operator))
        .route("/sweep", post(sweep))
}

fn fakes(st: &AppState) -> Result<Arc<Fakes>, ApiError> {
    st.fakes.clone().ok_or_else(|| ApiError::not_found("inspection is disabled"))
}

#[derive(Debug, Deserialize)]
pub struct SmsQuery {
    pub phone: Option<String>,
}

async fn sms_outbox(State(st): State<AppState>, Params(q): Params<SmsQuery>) -> Result<Json<Vec<SmsRecord>>, ApiError> {
    let f = fakes(&st)?;
    Ok(Json(match q.phone {
        Some(p) => f.sms.sent_to(&p),
        None => f.sms.outbox(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct PushQuery {
    pub after: Option<u64>,
}

/// Waits for in-flight deliveries to settle, then lists delivered pushes.
async fn push_log(State(st): State<AppState>, Params(q): Params<PushQuery>) -> Result<Json<Vec<PushRecord>>, ApiError> {
    let f = fakes(&st)?;
    let svc = st.svc.clone();
    blocking(move || {
        svc.flush_deliveries();
        Ok(())
    })
    .await?;
    Ok(Json(f.push.delivered_after(q.after.unwrap_or(0))))
}

#[derive(Debug, Deserialize)]
pub struct DeviceRequest {
    pub push_token: String,
}

async fn register_device(State(st): State<AppState>, Body(req): Body<DeviceRequest>) -> Result<StatusCode, ApiError> {
    fakes(&st)?.push.register_device(&req.push_token);
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
pub struct FaultRequest {
    pub sms_fail: Option<bool>,
    pub push_drop_rate: Option<f64>,
}

async fn set_faults(State(st): State<AppState>, Body(req): Body<FaultRequest>) -> Result<StatusCode, ApiError> {
    let f = fakes(&st)?;
    if let Some(on) = req.sms_fail {
        f.sms.set_fail(on);
    }
    if let Some(rate) = req.push_drop_rate {
        f.push.set_drop_rate(rate);
    }
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
pub struct OperatorRequest {
    pub phone: String,
    pub display_name: String,
}

/// Creates a verified operator and hands back a session for it.
async fn provision_operator(
    State(st): State<AppState>,
    Body(req): Body<OperatorRequest>,
) -> Result<(StatusCode, Json<SessionGrant>), ApiError> {
    fakes(&st)?;
    let svc = st.svc.clone();
    let grant = blocking(move || {
        let phone = Phone::parse(&req.phone).map_err(|_| Error::InvalidPhone)?;
        let id = svc.provision_user(ProvisionedUser {
            phone,
            display_name: req.display_name,
            role: Role::Operator,
            verified: true,
            push_token: None,
            location: None,
        })?;
        svc.issue_session(&id)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(grant)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub expired: usize,
}

async fn sweep(State(st): State<AppState>) -> Result<Json<SweepResult>, ApiError> {
    fakes(&st)?;
    let svc = st.svc.clone();
    let expired = blocking(move || svc.expire_sweep(svc.now())).await?;
    Ok(Json(SweepResult { expired }))
}
