mod common;

use axum::http::{Method, StatusCode};
use common::{alert_body, harbour, App};
use serde_json::{json, Value};

struct Row {
    method: Method,
    path: String,
    body: Option<Value>,
    citizen: bool,
}

fn row(method: Method, path: impl Into<String>, body: Option<Value>, citizen: bool) -> Row {
    Row { method, path: path.into(), body, citizen }
}

#[tokio::test]
async fn every_endpoint_enforces_roles() {
    let app = App::new();
    let op = app.operator();
    let cit = app.citizen_at(38.2505, 21.7305);

    let a = app.post("/v1/alerts", &op, alert_body("Flood warning")).await.body["id"].as_str().unwrap().to_owned();
    assert_eq!(app.post(&format!("/v1/alerts/{a}/activate"), &op, json!({})).await.status, StatusCode::OK);
    let a2 = app.post("/v1/alerts", &op, alert_body("Second")).await.body["id"].as_str().unwrap().to_owned();
    app.post(&format!("/v1/alerts/{a2}/activate"), &op, json!({})).await;
    let draft = app.post("/v1/alerts", &op, alert_body("Draft")).await.body["id"].as_str().unwrap().to_owned();
    let g = app
        .post("/v1/groups", &op, json!({"alert_id": a, "area": harbour(), "title": "Harbour"}))
        .await
        .body["id"]
        .as_str()
        .unwrap()
        .to_owned();
    assert_eq!(app.post(&format!("/v1/groups/{g}/join"), &cit, json!({})).await.status, StatusCode::OK);
    let sos = app.post("/v1/sos", &cit, json!({"lat": 38.2505, "lon": 21.7305})).await.body["case_id"]
        .as_str()
        .unwrap()
        .to_owned();
    let rep = app
        .post("/v1/reports", &cit, json!({"lat": 38.2505, "lon": 21.7305, "description": "Water rising"}))
        .await
        .body["case_id"]
        .as_str()
        .unwrap()
        .to_owned();
    let media = app.post("/v1/media?kind=image", &cit, json!("fake image bytes")).await;
    assert_eq!(media.status, StatusCode::CREATED);
    let hash = media.body["hash"].as_str().unwrap().to_owned();
    let res = app
        .post("/v1/resources", &op, json!({"kind": "shelter", "name": "School", "lat": 38.26, "lon": 21.74}))
        .await
        .body["id"]
        .as_str()
        .unwrap()
        .to_owned();
    let cit_id = app.get("/v1/me", &cit).await.body["id"].as_str().unwrap().to_owned();

    let here = json!({"lat": 38.2505, "lon": 21.7305});
    let rows = vec![
        row(Method::GET, "/v1/me", None, true),
        row(Method::PUT, "/v1/me/location", Some(here.clone()), true),
        row(Method::PUT, "/v1/me/push-token", Some(json!({"push_token": "tok-new"})), true),
        row(Method::POST, "/v1/sos", Some(here.clone()), true),
        row(Method::GET, format!("/v1/sos/{sos}"), None, true),
        row(Method::POST, "/v1/reports", Some(json!({"lat": 38.25, "lon": 21.73, "description": "x"})), true),
        row(Method::GET, format!("/v1/reports/{rep}"), None, true),
        row(Method::GET, "/v1/cases?kind=sos", None, false),
        row(Method::GET, format!("/v1/cases/{sos}"), None, true),
        row(Method::PATCH, format!("/v1/cases/{rep}/status"), Some(json!({"status": "acknowledged"})), false),
        row(Method::POST, "/v1/media?kind=audio", Some(json!("more bytes")), true),
        row(Method::GET, format!("/v1/media/{hash}"), None, true),
        row(Method::GET, "/v1/alerts?lat=38.25&lon=21.73", None, true),
        row(Method::GET, "/v1/alerts", None, false),
        row(Method::POST, "/v1/alerts", Some(alert_body("Another")), false),
        row(Method::GET, format!("/v1/alerts/{a}"), None, true),
        row(Method::DELETE, format!("/v1/alerts/{draft}"), None, false),
        row(Method::POST, format!("/v1/alerts/{a}/activate"), Some(json!({})), false),
        row(Method::POST, format!("/v1/alerts/{a2}/cancel"), Some(json!({})), false),
        row(Method::GET, format!("/v1/alerts/{a}/deliveries"), None, false),
        row(Method::GET, "/v1/resources?lat=38.25&lon=21.73&kind=shelter&k=3", None, true),
        row(Method::POST, "/v1/resources", Some(json!({"kind": "hospital", "name": "H", "lat": 38.2, "lon": 21.7})), false),
        row(Method::GET, format!("/v1/zones?alert_id={a}"), None, true),
        row(Method::POST, "/v1/zones", Some(json!({"alert_id": a, "category": "safe", "area": harbour()})), false),
        row(Method::GET, format!("/v1/routes?alert_id={a}"), None, true),
        row(
            Method::POST,
            "/v1/routes",
            Some(json!({"alert_id": a, "waypoints": [{"lat": 38.25, "lon": 21.73}, {"lat": 38.26, "lon": 21.74}], "destination": res})),
            false,
        ),
        row(Method::GET, "/v1/groups", None, false),
        row(Method::POST, "/v1/groups", Some(json!({"alert_id": a, "area": harbour(), "title": "More"})), false),
        row(Method::GET, format!("/v1/groups/{g}"), None, true),
        row(Method::POST, format!("/v1/groups/{g}/join"), Some(json!({})), true),
        row(Method::POST, format!("/v1/groups/{g}/messages"), Some(json!({"body": "hello"})), true),
        row(Method::GET, format!("/v1/groups/{g}/messages?since_seq=0"), None, true),
        row(Method::POST, format!("/v1/groups/{g}/moderate"), Some(json!({"action": "unmute_user", "user_id": cit_id})), false),
        row(Method::GET, "/v1/ops/summary", None, false),
        row(Method::GET, "/v1/stream?follow=false", None, true),
    ];

    for r in &rows {
        let anon = app.send(r.method.clone(), &r.path, None, r.body.clone()).await;
        assert_eq!(anon.status, StatusCode::UNAUTHORIZED, "{} {} anonymous", r.method, r.path);
        assert_eq!(anon.body["code"], "unauthenticated");

        let bogus = app.send(r.method.clone(), &r.path, Some("not-a-session"), r.body.clone()).await;
        assert_eq!(bogus.status, StatusCode::UNAUTHORIZED, "{} {} bogus token", r.method, r.path);

        let c = app.send(r.method.clone(), &r.path, Some(&cit), r.body.clone()).await;
        if r.citizen {
            assert!(
                c.status.is_success(),
                "{} {} citizen got {} {}",
                r.method,
                r.path,
                c.status,
                c.body
            );
        } else {
            assert_eq!(c.status, StatusCode::FORBIDDEN, "{} {} citizen", r.method, r.path);
            assert_eq!(c.body["code"], "forbidden");
        }

        let o = app.send(r.method.clone(), &r.path, Some(&op), r.body.clone()).await;
        let allowed = o.status.is_success()
            || (r.path.ends_with("/activate") && o.status == StatusCode::CONFLICT);
        assert!(allowed, "{} {} operator got {} {}", r.method, r.path, o.status, o.body);
    }
}

#[tokio::test]
async fn public_endpoints_need_no_session() {
    let app = App::new();
    let health = app.send(Method::GET, "/v1/health", None, None).await;
    assert_eq!(health.status, StatusCode::OK);
    let reg = app.send(Method::POST, "/v1/auth/register", None, Some(json!({"phone": app.phone()}))).await;
    assert_eq!(reg.status, StatusCode::ACCEPTED);
    let verify = app
        .send(
            Method::POST,
            "/v1/auth/verify",
            None,
            Some(json!({"challenge_id": reg.body["challenge_id"], "code": "000000", "display_name": "X"})),
        )
        .await;
    assert_ne!(verify.status, StatusCode::FORBIDDEN);
}
