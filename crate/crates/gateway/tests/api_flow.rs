mod common;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use common::{alert_body, App};
use e112_gateway::state::AppState;
use serde_json::json;

#[tokio::test]
async fn sos_returns_created_receipt() {
    let app = App::new();
    let cit = app.citizen_at(38.25, 21.73);
    let r = app.post("/v1/sos", &cit, json!({"lat": 38.2501, "lon": 21.7302, "note": "trapped on roof"})).await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert!(r.body["case_id"].as_str().unwrap().starts_with("sos_"));
    assert_eq!(r.body["case_kind"], "sos");
    assert_eq!(r.body["status"], "open");
    assert!(r.body["place"].is_string());
    assert!(r.body["created_at"].is_i64());
}

#[tokio::test]
async fn headline_length_boundary() {
    let app = App::new();
    let op = app.operator();
    let ok = app.post("/v1/alerts", &op, alert_body(&"a".repeat(90))).await;
    assert_eq!(ok.status, StatusCode::CREATED, "{}", ok.body);
    let too_long = app.post("/v1/alerts", &op, alert_body(&"a".repeat(91))).await;
    assert_eq!(too_long.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(too_long.body["code"], "validation");
    assert!(too_long.body["details"].to_string().contains("short_text"), "{}", too_long.body);
    // Code points, not bytes.
    let greek = app.post("/v1/alerts", &op, alert_body(&"π".repeat(90))).await;
    assert_eq!(greek.status, StatusCode::CREATED);
}

#[tokio::test]
async fn alerts_at_a_point_list_exactly_the_covering_alerts() {
    let app = App::new();
    let op = app.operator();
    let a = app.post("/v1/alerts", &op, alert_body("Harbour flood")).await.body["id"].as_str().unwrap().to_owned();
    app.post(&format!("/v1/alerts/{a}/activate"), &op, json!({})).await;
    let mut far = alert_body("Elsewhere");
    far["area"] = json!({"type": "circle", "center": {"lat": 40.0, "lon": 22.0}, "radius_m": 500.0});
    let b = app.post("/v1/alerts", &op, far).await.body["id"].as_str().unwrap().to_owned();
    app.post(&format!("/v1/alerts/{b}/activate"), &op, json!({})).await;
    // A draft over the same point never shows.
    app.post("/v1/alerts", &op, alert_body("Draft")).await;

    let cit = app.citizen_at(38.25, 21.73);
    let here = app.get("/v1/alerts?lat=38.2501&lon=21.7301", &cit).await;
    assert_eq!(here.status, StatusCode::OK);
    let list = here.body.as_array().unwrap();
    assert_eq!(list.len(), 1);
    assert_eq!(list[0]["id"], a.as_str());
    let nowhere = app.get("/v1/alerts?lat=10&lon=10", &cit).await;
    assert_eq!(nowhere.body.as_array().unwrap().len(), 0);
    let half = app.get("/v1/alerts?lat=10", &cit).await;
    assert_eq!(half.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn errors_share_one_body_shape() {
    let app = App::new();
    let cit = app.citizen_at(38.25, 21.73);
    for r in [
        app.get("/v1/nope", &cit).await,
        app.get("/v1/alerts/alr_missing", &cit).await,
        app.post("/v1/sos", &cit, json!({"lat": 91.0, "lon": 0.0})).await,
        app.post("/v1/alerts", &cit, alert_body("x")).await,
        app.send(Method::GET, "/v1/me", None, None).await,
    ] {
        let obj = r.body.as_object().unwrap_or_else(|| panic!("no body for {}", r.status));
        assert!(obj["code"].is_string() && obj["message"].is_string() && obj.contains_key("details"));
    }
    let req = Request::builder()
        .method(Method::POST)
        .uri("/v1/sos")
        .header(header::AUTHORIZATION, format!("Bearer {cit}"))
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let bad = app.dispatch(req).await;
    assert_eq!(bad.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(bad.body["code"], "invalid_body");
}

#[tokio::test]
async fn status_mapping() {
    let app = App::new();
    let op = app.operator();
    let a = app.post("/v1/alerts", &op, alert_body("x")).await.body["id"].as_str().unwrap().to_owned();
    app.post(&format!("/v1/alerts/{a}/activate"), &op, json!({})).await;
    let again = app.post(&format!("/v1/alerts/{a}/activate"), &op, json!({})).await;
    assert_eq!(again.status, StatusCode::CONFLICT);
    assert_eq!(again.body["code"], "invalid_transition");
    assert_eq!(again.body["details"]["from"], "active");
    let missing = app.post("/v1/alerts/alr_nope/activate", &op, json!({})).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn registration_over_http() {
    let app = App::new();
    let phone = app.phone();
    let reg = app.send(Method::POST, "/v1/auth/register", None, Some(json!({"phone": phone}))).await;
    assert_eq!(reg.status, StatusCode::ACCEPTED);
    assert_eq!(reg.body["expires_in_s"], 300);
    let outbox = app.send(Method::GET, &format!("/v1/_inspect/sms?phone={}", phone.replace('+', "%2B")), None, None).await;
    let text = outbox.body[0]["text"].as_str().unwrap().to_owned();
    let code = text
        .split(|c: char| !c.is_ascii_digit())
        .find(|w| w.len() == 6)
        .unwrap_or_else(|| panic!("no code in {text}"))
        .to_owned();
    let wrong = app
        .send(Method::POST, "/v1/auth/verify", None, Some(json!({"challenge_id": reg.body["challenge_id"], "code": "x", "display_name": "Ana"})))
        .await;
    assert_eq!(wrong.status, StatusCode::UNAUTHORIZED);
    assert_eq!(wrong.body["details"]["attempts_left"], 2);
    let ok = app
        .send(Method::POST, "/v1/auth/verify", None, Some(json!({"challenge_id": reg.body["challenge_id"], "code": code, "display_name": "Ana"})))
        .await;
    assert_eq!(ok.status, StatusCode::OK);
    assert_eq!(ok.body["role"], "citizen");
    let token = ok.body["token"].as_str().unwrap();
    let me = app.get("/v1/me", token).await;
    assert_eq!(me.body["display_name"], "Ana");
    assert_eq!(me.body["verified"], true);
}

#[tokio::test]
async fn list_pages_are_capped() {
    let app = App::new();
    let op = app.operator();
    let cit = app.citizen_at(38.25, 21.73);
    for i in 0..105 {
        let r = app.post("/v1/sos", &cit, json!({"lat": 38.25, "lon": 21.73 + i as f64 * 1e-5})).await;
        assert_eq!(r.status, StatusCode::CREATED);
    }
    let all = app.get("/v1/cases?kind=sos&limit=1000", &op).await;
    assert_eq!(all.body.as_array().unwrap().len(), 100);
    let tail = app.get("/v1/cases?kind=sos&limit=100&offset=100", &op).await;
    assert_eq!(tail.body.as_array().unwrap().len(), 5);
    let open = app.get("/v1/cases?kind=sos&status=open&limit=3", &op).await;
    assert_eq!(open.body.as_array().unwrap().len(), 3);
    let summary = app.get("/v1/ops/summary", &op).await;
    assert_eq!(summary.body["open_sos"], 105);
}

#[tokio::test]
async fn media_round_trip_and_access() {
    let app = App::new();
    let cit = app.citizen_at(38.25, 21.73);
    let other = app.citizen_at(38.25, 21.73);
    let op = app.operator();
    let bytes: Vec<u8> = (0..=255u8).cycle().take(10_000).collect();
    let req = Request::builder()
        .method(Method::POST)
        .uri("/v1/media?kind=image")
        .header(header::AUTHORIZATION, format!("Bearer {cit}"))
        .body(Body::from(bytes.clone()))
        .unwrap();
    let up = app.dispatch(req).await;
    assert_eq!(up.status, StatusCode::CREATED);
    let hash = up.body["hash"].as_str().unwrap().to_owned();
    let down = app.get(&format!("/v1/media/{hash}"), &cit).await;
    assert_eq!(down.status, StatusCode::OK);
    assert_eq!(down.raw, bytes);
    assert_eq!(app.get(&format!("/v1/media/{hash}"), &op).await.raw, bytes);
    assert_eq!(app.get(&format!("/v1/media/{hash}"), &other).await.status, StatusCode::FORBIDDEN);

    let report = app
        .post("/v1/reports", &cit, json!({"lat": 38.25, "lon": 21.73, "media": [{"hash": hash, "kind": "image"}]}))
        .await;
    assert_eq!(report.status, StatusCode::CREATED);
    let dangling = app
        .post("/v1/reports", &cit, json!({"lat": 38.25, "lon": 21.73, "media": [{"hash": "0".repeat(64), "kind": "image"}]}))
        .await;
    assert_eq!(dangling.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(dangling.body["code"], "unknown_media_ref");
}

#[tokio::test]
async fn inspection_is_absent_without_fault_injection() {
    let app = App::new();
    let state = AppState { svc: app.state.svc.clone(), fakes: None };
    let router = e112_gateway::router(state);
    let resp = tower::ServiceExt::oneshot(router, Request::get("/v1/_inspect/sms").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn alerts_can_be_created_with_explicit_window() {
    let app = App::new();
    let op = app.operator();
    let mut body = alert_body("Window");
    body.as_object_mut().unwrap().remove("duration_s");
    let missing = app.post("/v1/alerts", &op, body.clone()).await;
    assert_eq!(missing.status, StatusCode::UNPROCESSABLE_ENTITY);
    body["effective_from"] = json!(common::T0.0);
    body["expires_at"] = json!(common::T0.0 + 60_000);
    let ok = app.post("/v1/alerts", &op, body).await;
    assert_eq!(ok.status, StatusCode::CREATED);
    assert_eq!(ok.body["expires_at"], common::T0.0 + 60_000);
}
