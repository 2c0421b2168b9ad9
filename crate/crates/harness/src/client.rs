//! Minimal blocking JSON client for the service API.

use std::time::Duration;

use serde_json::Value;
use ureq::Agent;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("service unreachable at {url}: {message}")]
    Unreachable { url: String, message: String },
}

#[derive(Debug, Clone)]
pub struct Reply {
    pub status: u16,
    pub body: Value,
    pub text: String,
}

impl Reply {
    pub fn ok(&self) -> bool {
        (200..300).contains(&self.status)
    }

    /// The `code` field of an error body.
    pub fn code(&self) -> Option<&str> {
        self.body.get("code").and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Verb {
    Get,
    Post,
    Put,
    Patch,
}

#[derive(Clone)]
pub struct Client {
    agent: Agent,
    base: String,
}

const RESPONSE_LIMIT: u64 = 256 * 1024 * 1024;

impl Client {
    pub fn new(base: &str) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Client { agent, base: base.trim_end_matches('/').to_owned() }
    }

    pub fn send(&self, verb: Verb, path: &str, token: Option<&str>, body: Option<&Value>) -> Result<Reply, ClientError> {
        let url = format!("{}{}", self.base, path);
        let auth = token.map(|t| format!("Bearer {t}"));
        let result = match verb {
            Verb::Get => {
                let mut req = self.agent.get(&url);
                if let Some(a) = &auth {
                    req = req.header("authorization", a);
                }
                req.call()
            }
            Verb::Post | Verb::Put | Verb::Patch => {
                let mut req = match verb {
                    Verb::Post => self.agent.post(&url),
                    Verb::Put => self.agent.put(&url),
                    _ => self.agent.patch(&url),
                };
                if let Some(a) = &auth {
                    req = req.header("authorization", a);
                }
                let payload = body.map(Value::to_string).unwrap_or_else(|| "{}".into());
                req.content_type("application/json").send(payload.as_bytes())
            }
        };
        let unreachable = |e: ureq::Error| ClientError::Unreachable { url: url.clone(), message: e.to_string() };
        let mut resp = result.map_err(unreachable)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().with_config().limit(RESPONSE_LIMIT).read_to_string().map_err(unreachable)?;
        let body = serde_json::from_str(&text).unwrap_or(Value::Null);
        Ok(Reply { status, body, text })
    }

    pub fn get(&self, path: &str, token: Option<&str>) -> Result<Reply, ClientError> {
        self.send(Verb::Get, path, token, None)
    }

    pub fn post(&self, path: &str, token: Option<&str>, body: &Value) -> Result<Reply, ClientError> {
        self.send(Verb::Post, path, token, Some(body))
    }

    /// Newline-delimited events from a non-following stream request.
    pub fn stream_snapshot(&self, token: &str) -> Result<Vec<Value>, ClientError> {
        let r = self.get("/v1/stream?follow=false", Some(token))?;
        Ok(r.text.lines().filter(|l| !l.trim().is_empty()).filter_map(|l| serde_json::from_str(l).ok()).collect())
    }
}
