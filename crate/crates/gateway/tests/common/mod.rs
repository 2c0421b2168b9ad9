#![allow(dead_code)]

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use e112_core::config::Config;
use e112_core::identity::ProvisionedUser;
use e112_core::model::{Phone, Role};
use e112_core::providers::{FakePush, FakeSms};
use e112_core::store::MemoryStore;
use e112_core::time::{ManualClock, Timestamp};
use e112_core::{Providers, Service};
use e112_gateway::state::{AppState, Fakes};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub const T0: Timestamp = Timestamp(1_750_000_000_000);

pub struct App {
    pub router: Router,
    pub state: AppState,
    pub clock: Arc<ManualClock>,
    pub push: Arc<FakePush>,
    pub sms: Arc<FakeSms>,
    next_phone: AtomicU64,
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: axum::http::HeaderMap,
    pub body: Value,
    pub raw: Vec<u8>,
}

impl App {
    pub fn new() -> Self {
        let mut config = Config::default();
        config.delivery.base_backoff_ms = 1;
        let sms = Arc::new(FakeSms::new());
        let push = Arc::new(FakePush::with_seed(3));
        push.set_permissive(true);
        let clock = Arc::new(ManualClock::new(T0));
        let svc = Service::with_clock(
            config,
            Arc::new(MemoryStore::new()),
            Providers::new(sms.clone(), push.clone()),
            clock.clone(),
        )
        .unwrap();
        let state = AppState {
            svc: Arc::new(svc),
            fakes: Some(Arc::new(Fakes { sms: sms.clone(), push: push.clone() })),
        };
        App { router: e112_gateway::router(state.clone()), state, clock, push, sms, next_phone: AtomicU64::new(1) }
    }

    pub fn phone(&self) -> String {
        format!("+3069{:08}", self.next_phone.fetch_add(1, Ordering::SeqCst))
    }

    fn provision(&self, role: Role, location: Option<(f64, f64)>) -> String {
        let svc = &self.state.svc;
        let id = svc
            .provision_user(ProvisionedUser {
                phone: Phone::parse(&self.phone()).unwrap(),
                display_name: "Test".into(),
                role,
                verified: true,
                push_token: Some(format!("tok-{}", self.next_phone.load(Ordering::SeqCst))),
                location: location.map(|(lat, lon)| e112_core::geo::Coordinate::new(lat, lon).unwrap()),
            })
            .unwrap();
        svc.issue_session(&id).unwrap().token
    }

    pub fn operator(&self) -> String {
        self.provision(Role::Operator, None)
    }

    pub fn citizen_at(&self, lat: f64, lon: f64) -> String {
        self.provision(Role::Citizen, Some((lat, lon)))
    }

    pub async fn send(&self, method: Method, path: &str, token: Option<&str>, body: Option<Value>) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        self.dispatch(req).await
    }

    pub async fn dispatch(&self, req: Request<Body>) -> Reply {
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let raw = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        let body = serde_json::from_slice(&raw).unwrap_or(Value::Null);
        Reply { status, headers, body, raw }
    }

    pub async fn get(&self, path: &str, token: &str) -> Reply {
        self.send(Method::GET, path, Some(token), None).await
    }

    pub async fn post(&self, path: &str, token: &str, body: Value) -> Reply {
        self.send(Method::POST, path, Some(token), Some(body)).await
    }
}

pub fn harbour() -> Value {
    json!({"type": "circle", "center": {"lat": 38.25, "lon": 21.73}, "radius_m": 1000.0})
}

pub fn alert_body(short_text: &str) -> Value {
    json!({
        "hazard": "flood",
        "area": harbour(),
        "severity": "warning",
        "short_text": short_text,
        "guidance_text": "Move to the upper floors and avoid the waterfront.",
        "authority": "Civil Protection",
        "duration_s": 3600,
    })
}
