//! Endpoint handlers under `/v1`.

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post, put};
use axum::{Json, Router};
use e112_core::alerting::{ActivationSummary, DeliveryRecord};
use e112_core::catalog::ZoneView;
use e112_core::chat::{MessageView, ModerationAction, ModerationOutcome};
use e112_core::geo::{Coordinate, Geofence};
use e112_core::identity::SessionGrant;
use e112_core::ids::{AlertId, ChallengeId, GroupId, ResourceId};
use e112_core::intake::{Case, CaseKind, Receipt};
use e112_core::model::{
    Alert, AlertDraft, AlertSource, AlertStatus, ChatGroup, ContentHash, EvacuationRoute, GroupStatus, Hazard,
    MediaKind, MediaRef, Membership, ResourceKind, ResourcePoint, Severity, UserAccount, ZoneCategory,
};
use e112_core::ops::OpsSummary;
use e112_core::store::Page;
use e112_core::time::Timestamp;
use e112_core::{Error, LocationUpdate};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::extract::{blocking, Auth, Body, Params};
use crate::state::AppState;

type ApiResult<T> = Result<T, ApiError>;

pub fn routes() -> Router<AppState> {
    Router::new()
        .route("/health", get(health))
        .route("/auth/register", post(register))
        .route("/auth/verify", post(verify))
        .route("/me", get(me))
        .route("/me/location", put(set_location))
        .route("/me/push-token", put(set_push_token))
        .route("/sos", post(submit_sos))
        .route("/sos/{id}", get(get_case))
        .route("/reports", post(submit_report))
        .route("/reports/{id}", get(get_case))
        .route("/cases", get(list_cases))
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/status", patch(set_status))
        .route("/media", post(upload_media))
        .route("/media/{hash}", get(download_media))
        .route("/alerts", get(list_alerts).post(create_alert))
        .route("/alerts/{id}", get(get_alert).delete(delete_draft))
        .route("/alerts/{id}/activate", post(activate_alert))
        .route("/alerts/{id}/cancel", post(cancel_alert))
        .route("/alerts/{id}/deliveries", get(deliveries))
        .route("/resources", get(nearest_resources).post(create_resource))
        .route("/zones", get(list_zones).post(create_zone))
        .route("/routes", get(list_routes).post(create_route))
        .route("/groups", get(list_groups).post(open_group))
        .route("/groups/{id}", get(get_group))
        .route("/groups/{id}/join", post(join_group))
        .route("/groups/{id}/messages", get(history).post(post_message))
        .route("/groups/{id}/moderate", post(moderate))
        .route("/ops/summary", get(ops_summary))
}

#[derive(Debug, Default, Deserialize)]
pub struct Paging {
    pub limit: Option<usize>,
    pub offset: Option<usize>,
}

impl Paging {
    fn page(&self, max: usize) -> Page {
        Page::new(self.offset.unwrap_or(0), self.limit.unwrap_or(max).clamp(1, max))
    }
}

fn coordinate(lat: f64, lon: f64) -> Result<Coordinate, Error> {
    Coordinate::new(lat, lon).map_err(Error::InvalidLocation)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

#[derive(Debug, Deserialize)]
pub struct RegisterRequest {
    pub phone: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub challenge_id: ChallengeId,
    pub expires_in_s: u64,
}

async fn register(State(st): State<AppState>, Body(req): Body<RegisterRequest>) -> ApiResult<impl IntoResponse> {
    let svc = st.svc.clone();
    let id = blocking(move || svc.begin_registration(&req.phone)).await?;
    let expires_in_s = st.svc.config().verification.validity_secs;
    Ok((StatusCode::ACCEPTED, Json(RegisterResponse { challenge_id: id, expires_in_s })))
}

#[derive(Debug, Deserialize)]
pub struct VerifyRequest {
    pub challenge_id: ChallengeId,
    pub code: String,
    #[serde(default)]
    pub display_name: String,
}

async fn verify(State(st): State<AppState>, Body(req): Body<VerifyRequest>) -> ApiResult<Json<SessionGrant>> {
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.complete_registration(&req.challenge_id, &req.code, &req.display_name)).await?))
}

async fn me(State(st): State<AppState>, Auth(who): Auth) -> ApiResult<Json<UserAccount>> {
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.account(&who)).await?))
}

#[derive(Debug, Deserialize)]
pub struct LocationRequest {
    pub lat: f64,
    pub lon: f64,
    pub at: Option<Timestamp>,
}

async fn set_location(
    State(st): State<AppState>,
    Auth(who): Auth,
    Body(req): Body<LocationRequest>,
) -> ApiResult<Json<LocationUpdate>> {
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.update_location(&who, coordinate(req.lat, req.lon)?, req.at)).await?))
}

#[derive(Debug, Deserialize)]
pub struct PushTokenRequest {
    pub push_token: Option<String>,
}

async fn set_push_token(
    State(st): State<AppState>,
    Auth(who): Auth,
    Body(req): Body<PushTokenRequest>,
) -> ApiResult<StatusCode> {
    let svc = st.svc.clone();
    blocking(move || svc.set_push_token(&who, req.push_token)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
pub struct SosRequestBody {
    pub lat: f64,
    pub lon: f64,
    pub note: Option<String>,
}

async fn submit_sos(
    State(st): State<AppState>,
    Auth(who): Auth,
    Body(req): Body<SosRequestBody>,
) -> ApiResult<(StatusCode, Json<Receipt>)> {
    let svc = st.svc.clone();
    let r = blocking(move || svc.submit_sos(&who, coordinate(req.lat, req.lon)?, req.note)).await?;
    Ok((StatusCode::CREATED, Json(r)))
}

#[derive(Debug, Deserialize)]
pub struct ReportRequest {
    pub lat: f64,
    pub lon: f64,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub media: Vec<MediaRef>,
}

async fn submit_report(
    State(st): State<AppState>,
    Auth(who): Auth,
    Body(req): Body<ReportRequest>,
) -> ApiResult<(StatusCode, Json<Receipt>)> {
    let svc = st.svc.clone();
    let r = blocking(move || svc.submit_report(&who, coordinate(req.lat, req.lon)?, &req.description, req.media))
        .await?;
    Ok((StatusCode::CREATED, Json(r)))
}

async fn get_case(State(st): State<AppState>, Auth(who): Auth, Path(id): Path<String>) -> ApiResult<Json<Case>> {
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.case(&who, &id)).await?))
}

#[derive(Debug, Deserialize)]
pub struct CaseQuery {
    pub kind: CaseKind,
    pub status: Option<String>,
    pub limit: Option<usize>,
    pub offset: Option<usize>,
}

async fn list_cases(
    State(st): State<AppState>,
    Auth(who): Auth,
    Params(q): Params<CaseQuery>,
) -> ApiResult<Json<Vec<Case>>> {
    let svc = st.svc.clone();
    let page = Paging { limit: q.limit, offset: q.offset }.page(svc.config().max_page);
    Ok(Json(blocking(move || svc.list_cases(&who, q.kind, q.status.as_deref(), page)).await?))
}

#[derive(Debug, Deserialize)]
pub struct StatusRequest {
    pub status: String,
}

async fn set_status(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(id): Path<String>,
    Body(req): Body<StatusRequest>,
) -> ApiResult<Json<Case>> {
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.set_status(&who, &id, &req.status)).await?))
}

#[derive(Debug, Deserialize)]
pub struct MediaQuery {
    pub kind: MediaKind,
}

async fn upload_media(
    State(st): State<AppState>,
    Auth(who): Auth,
    Params(q): Params<MediaQuery>,
    bytes: axum::body::Bytes,
) -> ApiResult<(StatusCode, Json<MediaRef>)> {
    let svc = st.svc.clone();
    let r = blocking(move || svc.store_media(&who, &bytes, q.kind)).await?;
    Ok((StatusCode::CREATED, Json(r)))
}

async fn download_media(State(st): State<AppState>, Auth(who): Auth, Path(hash): Path<String>) -> ApiResult<Response> {
    let hash = ContentHash::parse(&hash).map_err(|_| Error::UnknownMediaRef(hash.clone()))?;
    let svc = st.svc.clone();
    let (bytes, obj) = blocking(move || svc.fetch_media(&who, &hash)).await?;
    let content_type = match obj.kinds.iter().next() {
        Some(MediaKind::Image) => "image/*",
        Some(MediaKind::Video) => "video/*",
        Some(MediaKind::Audio) => "audio/*",
        None => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

#[derive(Debug, Deserialize)]
pub struct AlertQuery {
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub status: Option<String>,
    pub limit: Option<usize>,
    pub offset: Option<usize>,
}

/// An active alert as a citizen sees it, with the chat groups it anchors.
#[derive(Debug, Serialize, Deserialize)]
pub struct AlertAtPoint {
    #[serde(flatten)]
    pub alert: Alert,
    pub groups: Vec<ChatGroup>,
}

async fn list_alerts(
    State(st): State<AppState>,
    Auth(who): Auth,
    Params(q): Params<AlertQuery>,
) -> ApiResult<Response> {
    let svc = st.svc.clone();
    match (q.lat, q.lon) {
        (Some(lat), Some(lon)) => {
            let out = blocking(move || {
                let p = coordinate(lat, lon)?;
                let groups = svc.groups_at(p)?;
                let alerts = svc.active_alerts_at(p, svc.now())?;
                Ok(alerts
                    .into_iter()
                    .map(|a| {
                        let groups = groups.iter().filter(|g| g.alert_id == a.id).cloned().collect();
                        AlertAtPoint { alert: a, groups }
                    })
                    .collect::<Vec<_>>())
            })
            .await?;
            Ok(Json(out).into_response())
        }
        (None, None) => {
            let status = match q.status.as_deref() {
                Some(s) => Some(AlertStatus::parse(s).ok_or_else(|| Error::BadRequest(format!("unknown status {s:?}")))?),
                None => None,
            };
            let page = Paging { limit: q.limit, offset: q.offset }.page(svc.config().max_page);
            Ok(Json(blocking(move || svc.list_alerts(&who, status, page)).await?).into_response())
        }
        _ => Err(Error::BadRequest("lat and lon go together".into()).into()),
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateAlertRequest {
    pub hazard: Hazard,
    pub area: Geofence,
    pub severity: Severity,
    pub short_text: String,
    pub guidance_text: String,
    pub authority: String,
    pub effective_from: Option<Timestamp>,
    pub expires_at: Option<Timestamp>,
    /// Alternative to `expires_at`: lifetime in seconds from `effective_from`.
    pub duration_s: Option<u64>,
}

async fn create_alert(
    State(st): State<AppState>,
    Auth(who): Auth,
    Body(req): Body<CreateAlertRequest>,
) -> ApiResult<(StatusCode, Json<Alert>)> {
    let svc = st.svc.clone();
    let alert = blocking(move || {
        let from = req.effective_from.unwrap_or_else(|| svc.now());
        let expires_at = match (req.expires_at, req.duration_s) {
            (Some(t), _) => t,
            (None, Some(d)) => from.plus(std::time::Duration::from_secs(d)),
            (None, None) => return Err(Error::BadRequest("expires_at or duration_s is required".into())),
        };
        let draft = AlertDraft {
            hazard: req.hazard,
            area: req.area,
            severity: req.severity,
            short_text: req.short_text,
            guidance_text: req.guidance_text,
            source: AlertSource { operator_id: who.user_id.clone(), authority: req.authority },
            effective_from: from,
            expires_at,
        };
        svc.create_alert(&who, draft)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(alert)))
}

async fn get_alert(State(st): State<AppState>, Auth(who): Auth, Path(id): Path<AlertId>) -> ApiResult<Json<Alert>> {
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.alert(&who, &id)).await?))
}

async fn delete_draft(State(st): State<AppState>, Auth(who): Auth, Path(id): Path<AlertId>) -> ApiResult<StatusCode> {
    let svc = st.svc.clone();
    blocking(move || svc.delete_draft(&who, &id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn activate_alert(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(id): Path<AlertId>,
) -> ApiResult<Json<ActivationSummary>> {
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.activate_alert(&who, &id)).await?))
}

async fn cancel_alert(State(st): State<AppState>, Auth(who): Auth, Path(id): Path<AlertId>) -> ApiResult<Json<Alert>> {
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.cancel_alert(&who, &id)).await?))
}

async fn deliveries(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(id): Path<AlertId>,
) -> ApiResult<Json<Vec<DeliveryRecord>>> {
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.deliveries(&who, &id)).await?))
}

#[derive(Debug, Deserialize)]
pub struct ResourceQuery {
    pub kind: Option<String>,
    pub lat: f64,
    pub lon: f64,
    pub k: Option<usize>,
}

async fn nearest_resources(
    State(st): State<AppState>,
    Auth(_who): Auth,
    Params(q): Params<ResourceQuery>,
) -> ApiResult<Json<Vec<ResourcePoint>>> {
    let kind = match q.kind.as_deref() {
        Some(k) => Some(ResourceKind::parse(k).ok_or_else(|| Error::BadRequest(format!("unknown resource kind {k:?}")))?),
        None => None,
    };
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.nearest_resources(kind, coordinate(q.lat, q.lon)?, q.k.unwrap_or(5))).await?))
}

#[derive(Debug, Deserialize)]
pub struct CreateResourceRequest {
    pub kind: ResourceKind,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

async fn create_resource(
    State(st): State<AppState>,
    Auth(who): Auth,
    Body(req): Body<CreateResourceRequest>,
) -> ApiResult<(StatusCode, Json<ResourcePoint>)> {
    let svc = st.svc.clone();
    let r = blocking(move || svc.create_resource(&who, req.kind, &req.name, coordinate(req.lat, req.lon)?)).await?;
    Ok((StatusCode::CREATED, Json(r)))
}

#[derive(Debug, Deserialize)]
pub struct AlertFilter {
    pub alert_id: Option<AlertId>,
}

async fn list_zones(
    State(st): State<AppState>,
    Auth(who): Auth,
    Params(q): Params<AlertFilter>,
) -> ApiResult<Json<Vec<ZoneView>>> {
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.zones(&who, q.alert_id.as_ref())).await?))
}

#[derive(Debug, Deserialize)]
pub struct CreateZoneRequest {
    pub alert_id: Option<AlertId>,
    pub category: ZoneCategory,
    pub area: Geofence,
}

async fn create_zone(
    State(st): State<AppState>,
    Auth(who): Auth,
    Body(req): Body<CreateZoneRequest>,
) -> ApiResult<(StatusCode, Json<ZoneView>)> {
    let svc = st.svc.clone();
    let z = blocking(move || svc.create_zone(&who, req.alert_id, req.category, req.area)).await?;
    Ok((StatusCode::CREATED, Json(z)))
}

async fn list_routes(
    State(st): State<AppState>,
    Auth(who): Auth,
    Params(q): Params<AlertFilter>,
) -> ApiResult<Json<Vec<EvacuationRoute>>> {
    let alert = q.alert_id.ok_or_else(|| Error::BadRequest("alert_id is required".into()))?;
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.routes(&who, &alert)).await?))
}

#[derive(Debug, Deserialize)]
pub struct CreateRouteRequest {
    pub alert_id: AlertId,
    pub waypoints: Vec<Coordinate>,
    pub destination: ResourceId,
}

async fn create_route(
    State(st): State<AppState>,
    Auth(who): Auth,
    Body(req): Body<CreateRouteRequest>,
) -> ApiResult<(StatusCode, Json<EvacuationRoute>)> {
    let svc = st.svc.clone();
    let r = blocking(move || svc.create_route(&who, req.alert_id, req.waypoints, req.destination)).await?;
    Ok((StatusCode::CREATED, Json(r)))
}

#[derive(Debug, Deserialize)]
pub struct OpenGroupRequest {
    pub alert_id: AlertId,
    pub area: Geofence,
    pub title: String,
}

async fn open_group(
    State(st): State<AppState>,
    Auth(who): Auth,
    Body(req): Body<OpenGroupRequest>,
) -> ApiResult<(StatusCode, Json<ChatGroup>)> {
    let svc = st.svc.clone();
    let g = blocking(move || svc.open_group(&who, &req.alert_id, req.area, &req.title)).await?;
    Ok((StatusCode::CREATED, Json(g)))
}

#[derive(Debug, Deserialize)]
pub struct GroupQuery {
    pub status: Option<String>,
    pub limit: Option<usize>,
    pub offset: Option<usize>,
}

async fn list_groups(
    State(st): State<AppState>,
    Auth(who): Auth,
    Params(q): Params<GroupQuery>,
) -> ApiResult<Json<Vec<ChatGroup>>> {
    let status = match q.status.as_deref() {
        Some(s) => Some(GroupStatus::parse(s).ok_or_else(|| Error::BadRequest(format!("unknown status {s:?}")))?),
        None => None,
    };
    let svc = st.svc.clone();
    let page = Paging { limit: q.limit, offset: q.offset }.page(svc.config().max_page);
    Ok(Json(blocking(move || svc.list_groups(&who, status, page)).await?))
}

async fn get_group(State(st): State<AppState>, Auth(who): Auth, Path(id): Path<GroupId>) -> ApiResult<Json<ChatGroup>> {
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.group(&who, &id)).await?))
}

async fn join_group(State(st): State<AppState>, Auth(who): Auth, Path(id): Path<GroupId>) -> ApiResult<Json<Membership>> {
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.join_group(&who, &id)).await?))
}

#[derive(Debug, Deserialize)]
pub struct PostRequest {
    pub body: String,
}

async fn post_message(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(id): Path<GroupId>,
    Body(req): Body<PostRequest>,
) -> ApiResult<(StatusCode, Json<MessageView>)> {
    let svc = st.svc.clone();
    let m = blocking(move || svc.post_message(&who, &id, &req.body)).await?;
    Ok((StatusCode::CREATED, Json(m)))
}

#[derive(Debug, Deserialize)]
pub struct HistoryQuery {
    pub since_seq: Option<u64>,
    pub limit: Option<usize>,
}

async fn history(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(id): Path<GroupId>,
    Params(q): Params<HistoryQuery>,
) -> ApiResult<Json<Vec<MessageView>>> {
    let svc = st.svc.clone();
    let limit = q.limit.unwrap_or(svc.config().max_page);
    Ok(Json(blocking(move || svc.history(&who, &id, q.since_seq.unwrap_or(0), limit)).await?))
}

async fn moderate(
    State(st): State<AppState>,
    Auth(who): Auth,
    Path(id): Path<GroupId>,
    Body(action): Body<ModerationAction>,
) -> ApiResult<Json<ModerationOutcome>> {
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.moderate(&who, &id, action)).await?))
}

async fn ops_summary(State(st): State<AppState>, Auth(who): Auth) -> ApiResult<Json<OpsSummary>> {
    let svc = st.svc.clone();
    Ok(Json(blocking(move || svc.ops_summary(&who)).await?))
}
