//! Drives a scenario against a live service and scores the outcome.
//!
//! The timeline runs one event at a time. After each event the runner waits
//! for in-flight pushes to settle (through the inspection endpoint) and
//! attributes every new push to a scenario user and alert. Who *should* have
//! been reached is decided independently by [`crate::oracle`] from the
//! positions the runner itself sent.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde_json::{json, Value};

use crate::client::{Client, ClientError, Reply, Verb};
use crate::oracle::{precision_recall, Area, LatLon};
use crate::report::{AlertDelivery, AssertionResult, Delivery, Latency, Percentiles, Report};
use crate::scenario::{Check, Event, ModerationOp, Role, Scenario, TracePoint};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Unreachable(#[from] ClientError),
    #[error("the service does not expose inspection endpoints; start it with fault injection")]
    NoInspection,
    #[error("t={t} {action}: service answered {status}: {body}")]
    Step { t: u64, action: String, status: u16, body: String },
    #[error("t={t} {action}: {message}")]
    Precondition { t: u64, action: String, message: String },
}

struct UserState {
    role: Role,
    phone: String,
    display_name: String,
    wants_push: bool,
    token: Option<String>,
    push_token: Option<String>,
    position: Option<LatLon>,
    trace: VecDeque<TracePoint>,
}

#[derive(Clone, Copy)]
struct Trigger {
    step: usize,
    wall_ms: i64,
}

struct AlertState {
    server_id: String,
    area: Area,
    active: bool,
    expected: BTreeSet<String>,
    triggers: HashMap<String, Trigger>,
}

struct CaseState {
    server_id: String,
    owner: String,
    receipt: Reply,
}

struct MessageState {
    server_id: String,
    group: String,
    body: String,
}

/// One HTTP call an event needs.
struct Call {
    verb: Verb,
    path: String,
    token: Option<String>,
    body: Option<Value>,
}

struct Observed {
    step: usize,
    received_ms: i64,
}

pub struct Runner {
    client: Client,
    scenario: Scenario,
    users: BTreeMap<String, UserState>,
    alerts: BTreeMap<String, AlertState>,
    alert_by_server: HashMap<String, String>,
    cases: HashMap<String, CaseState>,
    groups: HashMap<String, String>,
    messages: HashMap<String, MessageState>,
    token_owner: HashMap<String, String>,
    pushes: BTreeMap<(String, String), Vec<Observed>>,
    push_cursor: u64,
    step: usize,
    t: u64,
    assertions: Vec<AssertionResult>,
}

fn wall_ms() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as i64).unwrap_or(0)
}

fn encode_query(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

/// The longest run of digits in an SMS, which is the verification code.
fn code_in(text: &str) -> Option<&str> {
    text.split(|c: char| !c.is_ascii_digit()).max_by_key(|w| w.len()).filter(|w| w.len() >= 4)
}

/// Runs `f` over `items` with at most `parallel` calls in flight.
fn parallel_map<T: Sync, R: Send>(items: &[T], parallel: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if parallel <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut out: Vec<(usize, R)> = std::thread::scope(|s| {
        let workers: Vec<_> = (0..parallel.min(items.len()))
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= items.len() {
                            return done;
                        }
                        done.push((i, f(&items[i])));
                    }
                })
            })
            .collect();
        workers.into_iter().flat_map(|w| w.join().expect("worker panicked")).collect()
    });
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, r)| r).collect()
}

fn action_name(e: &Event) -> &'static str {
    match e {
        Event::Register { .. } => "register",
        Event::Move { .. } => "move",
        Event::IssueAlert { .. } => "issue_alert",
        Event::Activate { .. } => "activate",
        Event::Cancel { .. } => "cancel",
        Event::SubmitSos { .. } => "submit_sos",
        Event::SubmitReport { .. } => "submit_report",
        Event::SetStatus { .. } => "set_status",
        Event::OpenGroup { .. } => "open_group",
        Event::Join { .. } => "join",
        Event::PostMessage { .. } => "post_message",
        Event::Moderate { .. } => "moderate",
        Event::Burst { .. } => "burst",
        Event::Expect { .. } => "expect",
    }
}

/// Runs `scenario` against the service at `endpoint`.
pub fn run(scenario: &Scenario, endpoint: &str) -> Result<Report, RunError> {
    Runner::new(scenario.clone(), endpoint)?.execute()
}

impl Runner {
    pub fn new(scenario: Scenario, endpoint: &str) -> Result<Self, RunError> {
        let client = Client::new(endpoint);
        client.get("/v1/health", None)?;
        if client.get("/v1/_inspect/sms?phone=none", None)?.status == 404 {
            return Err(RunError::NoInspection);
        }
        // Phones and push tokens differ per run so repeated runs against one
        // server do not trip the per-number verification limit.
        let nonce: u32 = rand::rng().random_range(0..10_000);
        let users = scenario
            .population
            .iter()
            .enumerate()
            .map(|(i, u)| {
                let state = UserState {
                    role: u.role,
                    phone: format!("+3069{nonce:04}{i:06}"),
                    display_name: u.display_name.clone().unwrap_or_else(|| format!("Sim {}", u.id)),
                    wants_push: u.push,
                    token: None,
                    push_token: u.push.then(|| format!("sim-{nonce:04}-{i:06}")),
                    position: None,
                    trace: u.trace.iter().copied().collect(),
                };
                (u.id.clone(), state)
            })
            .collect();
        Ok(Runner {
            client,
            scenario,
            users,
            alerts: BTreeMap::new(),
            alert_by_server: HashMap::new(),
            cases: HashMap::new(),
            groups: HashMap::new(),
            messages: HashMap::new(),
            token_owner: HashMap::new(),
            pushes: BTreeMap::new(),
            push_cursor: 0,
            step: 0,
            t: 0,
            assertions: Vec::new(),
        })
    }

    pub fn execute(mut self) -> Result<Report, RunError> {
        self.push_cursor = self.latest_push_seq()?;
        let timeline = std::mem::take(&mut self.scenario.timeline);
        for (i, te) in timeline.iter().enumerate() {
            self.step = i + 1;
            self.t = te.t;
            self.advance_traces(te.t)?;
            self.event(&te.event)?;
            self.poll_pushes()?;
        }
        self.scenario.timeline = timeline;
        Ok(self.report())
    }

    fn latest_push_seq(&self) -> Result<u64, RunError> {
        let r = self.client.get("/v1/_inspect/push", None)?;
        Ok(r.body.as_array().and_then(|a| a.last()).and_then(|p| p["seq"].as_u64()).unwrap_or(0))
    }

    fn fail(&self, action: &str, r: &Reply) -> RunError {
        RunError::Step { t: self.t, action: action.into(), status: r.status, body: r.text.clone() }
    }

    fn precondition(&self, action: &str, message: impl Into<String>) -> RunError {
        RunError::Precondition { t: self.t, action: action.into(), message: message.into() }
    }

    fn token_of(&self, user: &str, action: &str) -> Result<String, RunError> {
        self.users[user].token.clone().ok_or_else(|| self.precondition(action, format!("{user} is not registered")))
    }

    fn operator_token(&self, by: &Option<String>, action: &str) -> Result<String, RunError> {
        match by {
            Some(id) => self.token_of(id, action),
            None => self
                .users
                .values()
                .find(|u| u.role == Role::Operator && u.token.is_some())
                .and_then(|u| u.token.clone())
                .ok_or_else(|| self.precondition(action, "no registered operator")),
        }
    }

    /// Moves users along their traces up to time `t`. Positions of users
    /// who have not registered yet are remembered and sent at registration.
    fn advance_traces(&mut self, t: u64) -> Result<(), RunError> {
        let mut due = Vec::new();
        for (id, u) in self.users.iter_mut() {
            while u.trace.front().is_some_and(|p| p.t <= t) {
                let p = u.trace.pop_front().expect("checked");
                let at = LatLon::new(p.lat, p.lon);
                if u.token.is_some() {
                    due.push((id.clone(), at));
                } else {
                    u.position = Some(at);
                }
            }
        }
        for (id, at) in due {
            self.send_position(&id, at)?;
        }
        Ok(())
    }

    fn send_position(&mut self, user: &str, at: LatLon) -> Result<(), RunError> {
        let token = self.token_of(user, "move")?;
        let started = wall_ms();
        let r = self.client.send(Verb::Put, "/v1/me/location", Some(&token), Some(&json!({"lat": at.lat, "lon": at.lon})))?;
        if !r.ok() {
            return Err(self.fail("move", &r));
        }
        self.moved(user, at, started);
        Ok(())
    }

    /// Records a new position and any alert areas the user just entered.
    fn moved(&mut self, user: &str, at: LatLon, started: i64) {
        let step = self.step;
        let u = self.users.get_mut(user).expect("known user");
        u.position = Some(at);
        if !u.wants_push || u.token.is_none() {
            return;
        }
        for a in self.alerts.values_mut() {
            if a.active && !a.expected.contains(user) && a.area.contains(at) {
                a.expected.insert(user.to_owned());
                a.triggers.insert(user.to_owned(), Trigger { step, wall_ms: started });
            }
        }
    }

    fn event(&mut self, e: &Event) -> Result<(), RunError> {
        match e {
            Event::Register { users, parallel } => self.register(users.as_deref(), parallel.unwrap_or(1)),
            Event::Expect { name, check } => {
                let (passed, detail) = self.check(check)?;
                let name = name.clone().unwrap_or_else(|| check.default_name());
                self.assertions.push(AssertionResult { name, t: self.t, passed, detail });
                Ok(())
            }
            Event::Burst { parallel, events } => {
                let started = wall_ms();
                let mut plans = Vec::new();
                for inner in events {
                    plans.push(self.plan(inner)?);
                }
                let flat: Vec<&Call> = plans.iter().flatten().collect();
                let client = self.client.clone();
                let mut replies = parallel_map(&flat, *parallel, |c| {
                    client.send(c.verb, &c.path, c.token.as_deref(), c.body.as_ref())
                })
                .into_iter();
                for (inner, plan) in events.iter().zip(&plans) {
                    let mine = replies.by_ref().take(plan.len()).collect::<Result<Vec<_>, _>>()?;
                    self.apply(inner, mine, started)?;
                }
                Ok(())
            }
            other => {
                let started = wall_ms();
                let calls = self.plan(other)?;
                let mut replies = Vec::with_capacity(calls.len());
                for c in &calls {
                    replies.push(self.client.send(c.verb, &c.path, c.token.as_deref(), c.body.as_ref())?);
                }
                self.apply(other, replies, started)
            }
        }
    }

    fn register(&mut self, which: Option<&[String]>, parallel: usize) -> Result<(), RunError> {
        let ids: Vec<String> = match which {
            Some(ids) => ids.to_vec(),
            None => self.users.keys().cloned().collect(),
        };
        let jobs: Vec<(String, Role, String, String, Option<String>)> = ids
            .iter()
            .map(|id| {
                let u = &self.users[id];
                (id.clone(), u.role, u.phone.clone(), u.display_name.clone(), u.push_token.clone())
            })
            .collect();
        let client = self.client.clone();
        let t = self.t;
        let results = parallel_map(&jobs, parallel, |(id, role, phone, name, push)| {
            register_one(&client, *role, phone, name, push.as_deref())
                .map_err(|e| match e {
                    RunError::Step { status, body, .. } => {
                        RunError::Step { t, action: format!("register {id}"), status, body }
                    }
                    other => other,
                })
        });
        for ((id, ..), token) in jobs.iter().zip(results) {
            let token = token?;
            let u = self.users.get_mut(id).expect("known user");
            u.token = Some(token);
            if let Some(p) = &u.push_token {
                self.token_owner.insert(p.clone(), id.clone());
            }
            if let Some(at) = u.position {
                self.send_position(id, at)?;
            }
        }
        Ok(())
    }

    fn plan(&self, e: &Event) -> Result<Vec<Call>, RunError> {
        let name = action_name(e);
        let call = |verb, path: String, token: String, body: Option<Value>| Call { verb, path, token: Some(token), body };
        Ok(match e {
            Event::Move { user, lat, lon } => {
                vec![call(Verb::Put, "/v1/me/location".into(), self.token_of(user, name)?, Some(json!({"lat": lat, "lon": lon})))]
            }
            Event::IssueAlert { by, hazard, severity, short_text, guidance_text, authority, area, duration_s, .. } => {
                vec![call(
                    Verb::Post,
                    "/v1/alerts".into(),
                    self.operator_token(by, name)?,
                    Some(json!({
                        "hazard": hazard, "severity": severity, "short_text": short_text,
                        "guidance_text": guidance_text, "authority": authority, "area": area,
                        "duration_s": duration_s,
                    })),
                )]
            }
            Event::Activate { alert, by } | Event::Cancel { alert, by } => {
                let verb = if matches!(e, Event::Activate { .. }) { "activate" } else { "cancel" };
                let sid = &self.alert(alert, name)?.server_id;
                vec![call(Verb::Post, format!("/v1/alerts/{sid}/{verb}"), self.operator_token(by, name)?, None)]
            }
            Event::SubmitSos { user, at, note, .. } => {
                let p = self.where_is(user, at, name)?;
                vec![call(
                    Verb::Post,
                    "/v1/sos".into(),
                    self.token_of(user, name)?,
                    Some(json!({"lat": p.lat, "lon": p.lon, "note": note})),
                )]
            }
            Event::SubmitReport { user, at, description, .. } => {
                let p = self.where_is(user, at, name)?;
                vec![call(
                    Verb::Post,
                    "/v1/reports".into(),
                    self.token_of(user, name)?,
                    Some(json!({"lat": p.lat, "lon": p.lon, "description": description})),
                )]
            }
            Event::SetStatus { case, status, by } => {
                let c = self.cases.get(case).ok_or_else(|| self.precondition(name, format!("case {case} was not created")))?;
                vec![call(
                    Verb::Patch,
                    format!("/v1/cases/{}/status", c.server_id),
                    self.operator_token(by, name)?,
                    Some(json!({"status": status})),
                )]
            }
            Event::OpenGroup { alert, title, area, by, .. } => {
                let a = self.alert(alert, name)?;
                vec![call(
                    Verb::Post,
                    "/v1/groups".into(),
                    self.operator_token(by, name)?,
                    Some(json!({"alert_id": a.server_id, "title": title, "area": area.as_ref().unwrap_or(&a.area)})),
                )]
            }
            Event::Join { group, users } => {
                let gid = self.group(group, name)?;
                users
                    .iter()
                    .map(|u| Ok(call(Verb::Post, format!("/v1/groups/{gid}/join"), self.token_of(u, name)?, None)))
                    .collect::<Result<_, RunError>>()?
            }
            Event::PostMessage { group, user, body, .. } => {
                let gid = self.group(group, name)?;
                vec![call(Verb::Post, format!("/v1/groups/{gid}/messages"), self.token_of(user, name)?, Some(json!({"body": body})))]
            }
            Event::Moderate { group, by, op } => {
                let gid = self.group(group, name)?;
                let action = match op {
                    ModerationOp::RemoveMessage { message } => {
                        let m = self.messages.get(message).ok_or_else(|| self.precondition(name, format!("message {message} was not posted")))?;
                        json!({"action": "remove_message", "message_id": m.server_id})
                    }
                    ModerationOp::MuteUser { user } => json!({"action": "mute_user", "user_id": self.user_id(user, name)?}),
                    ModerationOp::UnmuteUser { user } => json!({"action": "unmute_user", "user_id": self.user_id(user, name)?}),
                    ModerationOp::CloseGroup => json!({"action": "close_group"}),
                };
                vec![call(Verb::Post, format!("/v1/groups/{gid}/moderate"), self.operator_token(by, name)?, Some(action))]
            }
            Event::Register { .. } | Event::Burst { .. } | Event::Expect { .. } => {
                return Err(self.precondition(name, "cannot be part of a burst"))
            }
        })
    }

    fn apply(&mut self, e: &Event, replies: Vec<Reply>, started: i64) -> Result<(), RunError> {
        let name = action_name(e);
        if let Event::PostMessage { id, group, user, body, expect_error } = e {
            let r = &replies[0];
            if let Some(code) = expect_error {
                let passed = r.code() == Some(code.as_str());
                self.assertions.push(AssertionResult {
                    name: format!("post_message by {user} rejected with {code}"),
                    t: self.t,
                    passed,
                    detail: format!("status {} code {}", r.status, r.code().unwrap_or("-")),
                });
                return Ok(());
            }
            if !r.ok() {
                return Err(self.fail(name, r));
            }
            if let Some(id) = id {
                let server_id = r.body["id"].as_str().unwrap_or_default().to_owned();
                self.messages.insert(id.clone(), MessageState { server_id, group: group.clone(), body: body.clone() });
            }
            return Ok(());
        }
        if let Some(bad) = replies.iter().find(|r| !r.ok()) {
            return Err(self.fail(name, bad));
        }
        let r = &replies[0];
        match e {
            Event::Move { user, lat, lon } => self.moved(user, LatLon::new(*lat, *lon), started),
            Event::IssueAlert { id, area, .. } => {
                let server_id = r.body["id"].as_str().unwrap_or_default().to_owned();
                self.alert_by_server.insert(server_id.clone(), id.clone());
                self.alerts.insert(
                    id.clone(),
                    AlertState {
                        server_id,
                        area: area.clone(),
                        active: false,
                        expected: BTreeSet::new(),
                        triggers: HashMap::new(),
                    },
                );
            }
            Event::Activate { alert, .. } => {
                let step = self.step;
                let reachable: Vec<(String, LatLon)> = self
                    .users
                    .iter()
                    .filter(|(_, u)| u.token.is_some() && u.wants_push)
                    .filter_map(|(id, u)| u.position.map(|p| (id.clone(), p)))
                    .collect();
                let a = self.alerts.get_mut(alert).expect("planned");
                a.active = true;
                for (id, p) in reachable {
                    if a.area.contains(p) && a.expected.insert(id.clone()) {
                        a.triggers.insert(id, Trigger { step, wall_ms: started });
                    }
                }
            }
            Event::Cancel { alert, .. } => {
                self.alerts.get_mut(alert).expect("planned").active = false;
            }
            Event::SubmitSos { id, user, at, .. } | Event::SubmitReport { id, user, at, .. } => {
                let server_id = r.body["case_id"].as_str().unwrap_or_default().to_owned();
                self.cases.insert(id.clone(), CaseState { server_id, owner: user.clone(), receipt: r.clone() });
                // The service treats a case location as the device position.
                if let Some(p) = at {
                    self.moved(user, *p, started);
                }
            }
            Event::OpenGroup { id, .. } => {
                self.groups.insert(id.clone(), r.body["id"].as_str().unwrap_or_default().to_owned());
            }
            Event::SetStatus { .. } | Event::Join { .. } | Event::Moderate { .. } => {}
            Event::PostMessage { .. } | Event::Register { .. } | Event::Burst { .. } | Event::Expect { .. } => {}
        }
        Ok(())
    }

    fn alert(&self, id: &str, action: &str) -> Result<&AlertState, RunError> {
        self.alerts.get(id).ok_or_else(|| self.precondition(action, format!("alert {id} was not issued")))
    }

    fn group(&self, id: &str, action: &str) -> Result<String, RunError> {
        self.groups.get(id).cloned().ok_or_else(|| self.precondition(action, format!("group {id} was not opened")))
    }

    fn where_is(&self, user: &str, at: &Option<LatLon>, action: &str) -> Result<LatLon, RunError> {
        at.or(self.users[user].position).ok_or_else(|| self.precondition(action, format!("{user} has no position")))
    }

    fn user_id(&self, user: &str, action: &str) -> Result<String, RunError> {
        let token = self.token_of(user, action)?;
        let r = self.client.get("/v1/me", Some(&token))?;
        if !r.ok() {
            return Err(self.fail(action, &r));
        }
        Ok(r.body["id"].as_str().unwrap_or_default().to_owned())
    }

    fn poll_pushes(&mut self) -> Result<(), RunError> {
        let r = self.client.get(&format!("/v1/_inspect/push?after={}", self.push_cursor), None)?;
        if !r.ok() {
            return Err(self.fail("inspect push", &r));
        }
        for rec in r.body.as_array().into_iter().flatten() {
            self.push_cursor = self.push_cursor.max(rec["seq"].as_u64().unwrap_or(0));
            let Some(user) = rec["token"].as_str().and_then(|t| self.token_owner.get(t)) else {
                continue;
            };
            let payload: Value = rec["payload"].as_str().and_then(|p| serde_json::from_str(p).ok()).unwrap_or(Value::Null);
            let Some(alert) = payload["alert_id"].as_str().and_then(|a| self.alert_by_server.get(a)) else {
                continue;
            };
            self.pushes.entry((alert.clone(), user.clone())).or_default().push(Observed {
                step: self.step,
                received_ms: rec["received_ms"].as_i64().unwrap_or(0),
            });
        }
        Ok(())
    }

    fn delivered_to(&self, alert: &str) -> BTreeMap<String, usize> {
        self.pushes
            .range((alert.to_owned(), String::new())..)
            .take_while(|((a, _), _)| a == alert)
            .map(|((_, u), obs)| (u.clone(), obs.len()))
            .collect()
    }

    fn alert_delivery(&self, alert: &str) -> AlertDelivery {
        let want = self.alerts.get(alert).map(|a| a.expected.clone()).unwrap_or_default();
        let counts = self.delivered_to(alert);
        let got: BTreeSet<String> = counts.keys().cloned().collect();
        let (precision, recall) = precision_recall(&got, &want);
        AlertDelivery {
            alert: alert.to_owned(),
            expected: want.len(),
            delivered: got.len(),
            true_positives: got.intersection(&want).count(),
            duplicates: counts.values().map(|n| n - 1).sum(),
            precision,
            recall,
            missing: want.difference(&got).cloned().collect(),
            unexpected: got.difference(&want).cloned().collect(),
        }
    }

    fn check(&mut self, c: &Check) -> Result<(bool, String), RunError> {
        self.poll_pushes()?;
        Ok(match c {
            Check::OpenSosCount { equals } => {
                let token = self.operator_token(&None, "expect")?;
                let r = self.client.get("/v1/ops/summary", Some(&token))?;
                let got = r.body["open_sos"].as_u64();
                (got == Some(*equals as u64), format!("open_sos = {}", got.map_or("?".into(), |g| g.to_string())))
            }
            Check::Receipt { case } => {
                let c = &self.cases[case];
                let ok = c.receipt.status == 201 && !c.server_id.is_empty() && c.receipt.body["status"].is_string();
                let detail = format!(
                    "status {} kind {} case status {}",
                    c.receipt.status, c.receipt.body["case_kind"], c.receipt.body["status"]
                );
                (ok, detail)
            }
            Check::CaseStatusEvent { case, status } => {
                let c = &self.cases[case];
                let token = self.token_of(&c.owner, "expect")?;
                let events = self.client.stream_snapshot(&token)?;
                let seen: Vec<String> = events
                    .iter()
                    .filter(|e| e["kind"] == "case_status" && e["payload"]["case_id"] == c.server_id.as_str())
                    .filter_map(|e| e["payload"]["status"].as_str().map(str::to_owned))
                    .collect();
                (seen.iter().any(|s| s == status), format!("status events seen: {seen:?}"))
            }
            Check::MessageHidden { message, viewer } => {
                let m = &self.messages[message];
                let gid = self.groups[&m.group].clone();
                let token = self.token_of(viewer, "expect")?;
                let r = self.client.get(&format!("/v1/groups/{gid}/messages?since_seq=0"), Some(&token))?;
                let entry = r.body.as_array().and_then(|ms| ms.iter().find(|x| x["id"] == m.server_id.as_str())).cloned();
                let redacted = self
                    .client
                    .stream_snapshot(&token)?
                    .iter()
                    .any(|e| e["kind"] == "chat_redaction" && e["payload"]["message_id"] == m.server_id.as_str());
                match entry {
                    Some(x) => {
                        let hidden = x["body"] != m.body.as_str() && x["state"] == "removed";
                        (hidden && redacted, format!("history shows {:?}, redaction event: {redacted}", x["body"]))
                    }
                    None => (false, format!("message not in history (status {})", r.status)),
                }
            }
            Check::Delivered { alert, user } => {
                let n = self.delivered_to(alert).get(user).copied().unwrap_or(0);
                (n >= 1, format!("{n} pushes"))
            }
            Check::NotDelivered { alert, user } => {
                let n = self.delivered_to(alert).get(user).copied().unwrap_or(0);
                (n == 0, format!("{n} pushes"))
            }
            Check::DeliveriesMatchOracle { alert } => {
                let d = self.alert_delivery(alert);
                let ok = d.precision == 1.0 && d.recall == 1.0 && d.duplicates == 0;
                (
                    ok,
                    format!(
                        "expected {} delivered {} precision {} recall {} duplicates {}",
                        d.expected, d.delivered, d.precision, d.recall, d.duplicates
                    ),
                )
            }
            Check::ActiveAlertsAt { lat, lon, alerts } => {
                let token = self
                    .users
                    .values()
                    .find_map(|u| u.token.clone())
                    .ok_or_else(|| self.precondition("expect", "nobody is registered"))?;
                let r = self.client.get(&format!("/v1/alerts?lat={lat}&lon={lon}"), Some(&token))?;
                let got: BTreeSet<String> = r
                    .body
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter_map(|a| a["id"].as_str())
                    .map(|sid| self.alert_by_server.get(sid).cloned().unwrap_or_else(|| format!("foreign:{sid}")))
                    .collect();
                let want: BTreeSet<String> = alerts.iter().cloned().collect();
                (got == want, format!("active here: {got:?}"))
            }
        })
    }

    fn report(&self) -> Report {
        let per_alert: Vec<AlertDelivery> = self.alerts.keys().map(|a| self.alert_delivery(a)).collect();
        let (tp, got, want): (usize, usize, usize) = per_alert
            .iter()
            .fold((0, 0, 0), |(t, g, w), d| (t + d.true_positives, g + d.delivered, w + d.expected));
        let precision = if got == 0 { if want == 0 { 1.0 } else { 0.0 } } else { tp as f64 / got as f64 };
        let recall = if want == 0 { 1.0 } else { tp as f64 / want as f64 };

        let mut logical = Vec::new();
        let mut wall = Vec::new();
        for ((alert, user), obs) in &self.pushes {
            let Some(trigger) = self.alerts.get(alert).and_then(|a| a.triggers.get(user)) else {
                continue;
            };
            let first = &obs[0];
            logical.push(first.step.saturating_sub(trigger.step) as f64);
            wall.push((first.received_ms - trigger.wall_ms).max(0) as f64);
        }
        Report {
            scenario: self.scenario.name.clone(),
            seed: self.scenario.seed,
            users: self.users.len(),
            steps: self.scenario.timeline.len(),
            delivery: Delivery {
                precision,
                recall,
                duplicates: per_alert.iter().map(|d| d.duplicates).sum(),
                per_alert,
            },
            latency: Latency { logical_steps: Percentiles::of(&logical), wall_ms: Percentiles::of(&wall) },
            passed: self.assertions.iter().all(|a| a.passed),
            assertions: self.assertions.clone(),
        }
    }
}

fn register_one(client: &Client, role: Role, phone: &str, name: &str, push: Option<&str>) -> Result<String, RunError> {
    let step_err = |action: &str, r: &Reply| RunError::Step { t: 0, action: action.into(), status: r.status, body: r.text.clone() };
    let token = match role {
        Role::Operator => {
            let r = client.post("/v1/_inspect/operators", None, &json!({"phone": phone, "display_name": name}))?;
            if !r.ok() {
                return Err(step_err("provision operator", &r));
            }
            r.body["token"].as_str().unwrap_or_default().to_owned()
        }
        Role::Citizen => {
            let r = client.post("/v1/auth/register", None, &json!({"phone": phone}))?;
            if !r.ok() {
                return Err(step_err("register", &r));
            }
            let challenge = r.body["challenge_id"].clone();
            let sms = client.get(&format!("/v1/_inspect/sms?phone={}", encode_query(phone)), None)?;
            let text = sms.body.as_array().and_then(|a| a.last()).and_then(|m| m["text"].as_str()).unwrap_or_default();
            let code = code_in(text).ok_or_else(|| step_err("read sms", &sms))?;
            let r = client.post("/v1/auth/verify", None, &json!({"challenge_id": challenge, "code": code, "display_name": name}))?;
            if !r.ok() {
                return Err(step_err("verify", &r));
            }
            r.body["token"].as_str().unwrap_or_default().to_owned()
        }
    };
    if let Some(p) = push {
        client.post("/v1/_inspect/devices", None, &json!({"push_token": p}))?;
        let r = client.send(Verb::Put, "/v1/me/push-token", Some(&token), Some(&json!({"push_token": p})))?;
        if !r.ok() {
            return Err(step_err("push token", &r));
        }
    }
    Ok(token)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_the_code() {
        assert_eq!(code_in("Your e112 verification code is 113965. It expires in 5 minutes."), Some("113965"));
        assert_eq!(code_in("no code"), None);
    }

    #[test]
    fn query_encoding() {
        assert_eq!(encode_query("+30 69"), "%2B30%2069");
    }

    #[test]
    fn parallel_map_keeps_order() {
        let v: Vec<u32> = (0..100).collect();
        assert_eq!(parallel_map(&v, 7, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
