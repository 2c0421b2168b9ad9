mod common;

use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use common::{alert_body, harbour, App};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn lines(raw: &[u8]) -> Vec<Value> {
    std::str::from_utf8(raw)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

async fn active_alert(app: &App, op: &str) -> String {
    let a = app.post("/v1/alerts", op, alert_body("Flood")).await.body["id"].as_str().unwrap().to_owned();
    assert_eq!(app.post(&format!("/v1/alerts/{a}/activate"), op, json!({})).await.status, StatusCode::OK);
    a
}

#[tokio::test]
async fn activation_yields_one_alert_event() {
    let app = App::new();
    let op = app.operator();
    let inside = app.citizen_at(38.2505, 21.7305);
    let outside = app.citizen_at(38.4, 21.9);
    let a = active_alert(&app, &op).await;

    let r = app.get("/v1/stream?follow=false", &inside).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.headers[header::CONTENT_TYPE], "application/x-ndjson");
    let events = lines(&r.raw);
    assert_eq!(events.len(), 1);
    assert_eq!(events[0]["kind"], "alert");
    assert_eq!(events[0]["seq"], 1);
    assert_eq!(events[0]["payload"]["alert"]["alert_id"], a.as_str());
    assert!(events[0]["resume_token"].is_string());

    assert!(lines(&app.get("/v1/stream?follow=false", &outside).await.raw).is_empty());
}

async fn chatty(app: &App, messages: usize) -> (String, String) {
    let op = app.operator();
    let cit = app.citizen_at(38.2505, 21.7305);
    let a = active_alert(app, &op).await;
    let g = app.post("/v1/groups", &op, json!({"alert_id": a, "area": harbour(), "title": "Harbour"})).await.body["id"]
        .as_str()
        .unwrap()
        .to_owned();
    app.post(&format!("/v1/groups/{g}/join"), &cit, json!({})).await;
    for i in 0..messages {
        let r = app.post(&format!("/v1/groups/{g}/messages"), &op, json!({"body": format!("update {i}")})).await;
        assert_eq!(r.status, StatusCode::CREATED);
    }
    (cit, g)
}

#[tokio::test]
async fn resume_replays_after_the_token() {
    let app = App::new();
    let (cit, _) = chatty(&app, 8).await;
    let all = lines(&app.get("/v1/stream?follow=false", &cit).await.raw);
    assert!(all.len() >= 8);
    let seqs: Vec<u64> = all.iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1), "{seqs:?}");

    let token = all[4]["resume_token"].as_str().unwrap();
    let r = app.get(&format!("/v1/stream?follow=false&resume_token={token}"), &cit).await;
    assert_eq!(r.headers["x-e112-replay"], "resumed");
    let resumed = lines(&r.raw);
    assert_eq!(resumed[0]["seq"], 6);
    assert_eq!(resumed.len(), all.len() - 5);
}

#[tokio::test]
async fn garbage_token_replays_from_the_start() {
    let app = App::new();
    let (cit, _) = chatty(&app, 3).await;
    let all = lines(&app.get("/v1/stream?follow=false", &cit).await.raw);
    let r = app.get("/v1/stream?follow=false&resume_token=%25%25garbage", &cit).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.headers["x-e112-replay"], "full");
    assert_eq!(lines(&r.raw), all);

    // Someone else's token is just as unusable.
    let (other, _) = chatty(&app, 1).await;
    let foreign = lines(&app.get("/v1/stream?follow=false", &other).await.raw)[0]["resume_token"].as_str().unwrap().to_owned();
    let now = lines(&app.get("/v1/stream?follow=false", &cit).await.raw);
    let r = app.get(&format!("/v1/stream?follow=false&resume_token={foreign}"), &cit).await;
    assert_eq!(r.headers["x-e112-replay"], "full");
    assert_eq!(lines(&r.raw), now);
}

#[tokio::test]
async fn following_stream_delivers_live_events_in_seq_order() {
    let app = App::new();
    let (cit, g) = chatty(&app, 2).await;
    let req = Request::get("/v1/stream")
        .header(header::AUTHORIZATION, format!("Bearer {cit}"))
        .body(Body::empty())
        .unwrap();
    let resp = app.router.clone().oneshot(req).await.unwrap();
    let mut body = resp.into_body();
    let mut buf = Vec::new();
    let mut seen = Vec::new();

    let op = app.operator();
    let posts: Vec<_> = (0..20)
        .map(|i| {
            let router = app.router.clone();
            let op = op.clone();
            let g = g.clone();
            tokio::spawn(async move {
                let req = Request::post(format!("/v1/groups/{g}/messages"))
                    .header(header::AUTHORIZATION, format!("Bearer {op}"))
                    .header(header::CONTENT_TYPE, "application/json")
                    .body(Body::from(json!({"body": format!("live {i}")}).to_string()))
                    .unwrap();
                router.oneshot(req).await.unwrap().status()
            })
        })
        .collect();
    for p in posts {
        assert_eq!(p.await.unwrap(), StatusCode::CREATED);
    }

    while seen.iter().filter(|e: &&Value| e["kind"] == "chat_message").count() < 22 {
        let frame = tokio::time::timeout(Duration::from_secs(5), body.frame()).await.expect("stream stalled");
        let frame = frame.unwrap().unwrap();
        if let Ok(data) = frame.into_data() {
            buf.extend_from_slice(&data);
        }
        if let Some(end) = buf.iter().rposition(|&b| b == b'\n') {
            let chunk: Vec<u8> = buf.drain(..=end).collect();
            seen.extend(lines(&chunk));
        }
    }
    let seqs: Vec<u64> = seen.iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1), "{seqs:?}");
    let msg_seqs: Vec<u64> = seen
        .iter()
        .filter(|e| e["kind"] == "chat_message")
        .map(|e| e["payload"]["seq"].as_u64().unwrap())
        .collect();
    assert!(msg_seqs.windows(2).all(|w| w[1] > w[0]), "{msg_seqs:?}");
}

#[tokio::test]
async fn moderation_redaction_reaches_members() {
    let app = App::new();
    let (cit, g) = chatty(&app, 0).await;
    let op = app.operator();
    let msg = app.post(&format!("/v1/groups/{g}/messages"), &cit, json!({"body": "fake news"})).await;
    let id = msg.body["id"].as_str().unwrap().to_owned();
    let r = app.post(&format!("/v1/groups/{g}/moderate"), &op, json!({"action": "remove_message", "message_id": id})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    let events = lines(&app.get("/v1/stream?follow=false", &cit).await.raw);
    assert_eq!(events.last().unwrap()["kind"], "chat_redaction");
    let history = app.get(&format!("/v1/groups/{g}/messages"), &cit).await;
    let last = history.body.as_array().unwrap().last().unwrap().clone();
    assert_ne!(last["body"], "fake news");
}
