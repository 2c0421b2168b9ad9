//! Scenario files: a population with mobility traces and a timeline of
//! actions and assertions.
//!
//! ```json
//! {
//!   "name": "minimal",
//!   "seed": 1,
//!   "population": [
//!     {"id": "op", "role": "operator"},
//!     {"id": "u1", "trace": [{"t": 0, "lat": 38.25, "lon": 21.73}]}
//!   ],
//!   "timeline": [
//!     {"t": 0, "action": "register"},
//!     {"t": 1, "action": "issue_alert", "id": "a1", "hazard": "flood", "severity": "warning",
//!      "short_text": "Flood", "guidance_text": "Go up",
//!      "area": {"type": "circle", "center": {"lat": 38.25, "lon": 21.73}, "radius_m": 500}},
//!     {"t": 2, "action": "activate", "alert": "a1"},
//!     {"t": 3, "action": "expect", "assert": {"check": "deliveries_match_oracle", "alert": "a1"}}
//!   ]
//! }
//! ```

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::oracle::{Area, LatLon};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub population: Vec<UserSpec>,
    pub timeline: Vec<TimedEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    #[default]
    Citizen,
    Operator,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub id: String,
    #[serde(default)]
    pub role: Role,
    pub display_name: Option<String>,
    /// Whether the user's device registers for push.
    #[serde(default = "yes")]
    pub push: bool,
    #[serde(default)]
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracePoint {
    pub t: u64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t: u64,
    #[serde(flatten)]
    pub event: Event,
}

fn default_authority() -> String {
    "Civil Protection".into()
}

fn default_duration() -> u64 {
    3600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Event {
    /// Verifies the listed users (default: everyone) by SMS and sends their
    /// current trace position.
    Register {
        users: Option<Vec<String>>,
        #[serde(default)]
        parallel: Option<usize>,
    },
    Move {
        user: String,
        lat: f64,
        lon: f64,
    },
    IssueAlert {
        id: String,
        by: Option<String>,
        hazard: String,
        severity: String,
        short_text: String,
        guidance_text: String,
        #[serde(default = "default_authority")]
        authority: String,
        area: Area,
        #[serde(default = "default_duration")]
        duration_s: u64,
    },
    Activate {
        alert: String,
        by: Option<String>,
    },
    Cancel {
        alert: String,
        by: Option<String>,
    },
    SubmitSos {
        id: String,
        user: String,
        #[serde(default)]
        at: Option<LatLon>,
        note: Option<String>,
    },
    SubmitReport {
        id: String,
        user: String,
        #[serde(default)]
        at: Option<LatLon>,
        description: String,
    },
    SetStatus {
        case: String,
        status: String,
        by: Option<String>,
    },
    OpenGroup {
        id: String,
        alert: String,
        title: String,
        area: Option<Area>,
        by: Option<String>,
    },
    Join {
        group: String,
        users: Vec<String>,
    },
    PostMessage {
        id: Option<String>,
        group: String,
        user: String,
        body: String,
        /// Error code the service is expected to answer with.
        expect_error: Option<String>,
    },
    Moderate {
        group: String,
        by: Option<String>,
        op: ModerationOp,
    },
    /// Runs the inner events with up to `parallel` in flight at once.
    Burst {
        parallel: usize,
        events: Vec<Event>,
    },
    Expect {
        name: Option<String>,
        #[serde(rename = "assert")]
        check: Check,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModerationOp {
    RemoveMessage { message: String },
    MuteUser { user: String },
    UnmuteUser { user: String },
    CloseGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    OpenSosCount { equals: usize },
    Receipt { case: String },
    CaseStatusEvent { case: String, status: String },
    MessageHidden { message: String, viewer: String },
    Delivered { alert: String, user: String },
    NotDelivered { alert: String, user: String },
    DeliveriesMatchOracle { alert: String },
    ActiveAlertsAt { lat: f64, lon: f64, alerts: Vec<String> },
}

impl Check {
    pub fn default_name(&self) -> String {
        match self {
            Check::OpenSosCount { equals } => format!("open_sos_count={equals}"),
            Check::Receipt { case } => format!("receipt({case})"),
            Check::CaseStatusEvent { case, status } => format!("case_status_event({case}={status})"),
            Check::MessageHidden { message, viewer } => format!("message_hidden({message} for {viewer})"),
            Check::Delivered { alert, user } => format!("delivered({alert}->{user})"),
            Check::NotDelivered { alert, user } => format!("not_delivered({alert}->{user})"),
            Check::DeliveriesMatchOracle { alert } => format!("deliveries_match_oracle({alert})"),
            Check::ActiveAlertsAt { lat, lon, .. } => format!("active_alerts_at({lat},{lon})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("schema error at {path}{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Schema { path: String, line: Option<usize>, message: String },
    #[error("{path}: reference to undefined {kind} {id:?}")]
    DanglingReference { path: String, kind: &'static str, id: String },
    #[error("cannot read scenario: {0}")]
    Io(String),
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema { path: path.into(), line: None, message: message.into() }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Schema {
        path: e.path().to_string(),
        line: Some(e.inner().line()),
        message: e.inner().to_string(),
    })?;
    validate(&scenario)?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

#[derive(Default)]
struct Defined {
    users: HashMap<String, Role>,
    alerts: HashSet<String>,
    cases: HashSet<String>,
    groups: HashSet<String>,
    messages: HashSet<String>,
}

impl Defined {
    fn user(&self, path: &str, id: &str) -> Result<(), ScenarioError> {
        if self.users.contains_key(id) {
            Ok(())
        } else {
            Err(ScenarioError::DanglingReference { path: path.into(), kind: "user", id: id.into() })
        }
    }

    fn operator(&self, path: &str, id: &Option<String>) -> Result<(), ScenarioError> {
        match id {
            Some(id) => {
                self.user(path, id)?;
                if self.users[id] != Role::Operator {
                    return Err(schema(path, format!("{id:?} is not an operator")));
                }
                Ok(())
            }
            None if self.users.values().any(|r| *r == Role::Operator) => Ok(()),
            None => Err(schema(path, "the population has no operator")),
        }
    }

    fn known(set: &HashSet<String>, path: &str, kind: &'static str, id: &str) -> Result<(), ScenarioError> {
        if set.contains(id) {
            Ok(())
        } else {
            Err(ScenarioError::DanglingReference { path: path.into(), kind, id: id.into() })
        }
    }

    fn define(set: &mut HashSet<String>, path: &str, kind: &str, id: &str) -> Result<(), ScenarioError> {
        if !set.insert(id.to_owned()) {
            return Err(schema(path, format!("{kind} id {id:?} is defined twice")));
        }
        Ok(())
    }
}

fn coordinate(path: &str, lat: f64, lon: f64) -> Result<(), ScenarioError> {
    if !(lat.is_finite() && lon.is_finite() && (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)) {
        return Err(schema(path, format!("coordinate ({lat}, {lon}) is out of range")));
    }
    Ok(())
}

/// Checks ordering and that every reference names something defined earlier.
pub fn validate(s: &Scenario) -> Result<(), ScenarioError> {
    let mut d = Defined::default();
    for (i, u) in s.population.iter().enumerate() {
        let path = format!("population[{i}]");
        if d.users.insert(u.id.clone(), u.role).is_some() {
            return Err(schema(format!("{path}.id"), format!("user id {:?} is defined twice", u.id)));
        }
        for (j, p) in u.trace.iter().enumerate() {
            coordinate(&format!("{path}.trace[{j}]"), p.lat, p.lon)?;
            if j > 0 && p.t < u.trace[j - 1].t {
                return Err(schema(format!("{path}.trace[{j}].t"), "trace timestamps must be non-decreasing"));
            }
        }
    }
    let mut last = 0;
    for (i, te) in s.timeline.iter().enumerate() {
        let path = format!("timeline[{i}]");
        if te.t < last {
            return Err(schema(format!("{path}.t"), format!("timestamp {} is earlier than {last}", te.t)));
        }
        last = te.t;
        check_event(&mut d, &path, &te.event)?;
    }
    Ok(())
}

fn check_event(d: &mut Defined, path: &str, e: &Event) -> Result<(), ScenarioError> {
    match e {
        Event::Register { users, parallel } => {
            if let Some(us) = users {
                for (j, u) in us.iter().enumerate() {
                    d.user(&format!("{path}.users[{j}]"), u)?;
                }
            }
            if *parallel == Some(0) {
                return Err(schema(format!("{path}.parallel"), "must be at least 1"));
            }
        }
        Event::Move { user, lat, lon } => {
            d.user(&format!("{path}.user"), user)?;
            coordinate(path, *lat, *lon)?;
        }
        Event::IssueAlert { id, by, .. } => {
            d.operator(&format!("{path}.by"), by)?;
            Defined::define(&mut d.alerts, &format!("{path}.id"), "alert", id)?;
        }
        Event::Activate { alert, by } | Event::Cancel { alert, by } => {
            d.operator(&format!("{path}.by"), by)?;
            Defined::known(&d.alerts, &format!("{path}.alert"), "alert", alert)?;
        }
        Event::SubmitSos { id, user, at, .. } | Event::SubmitReport { id, user, at, .. } => {
            d.user(&format!("{path}.user"), user)?;
            if let Some(p) = at {
                coordinate(&format!("{path}.at"), p.lat, p.lon)?;
            }
            Defined::define(&mut d.cases, &format!("{path}.id"), "case", id)?;
        }
        Event::SetStatus { case, by, .. } => {
            d.operator(&format!("{path}.by"), by)?;
            Defined::known(&d.cases, &format!("{path}.case"), "case", case)?;
        }
        Event::OpenGroup { id, alert, by, .. } => {
            d.operator(&format!("{path}.by"), by)?;
            Defined::known(&d.alerts, &format!("{path}.alert"), "alert", alert)?;
            Defined::define(&mut d.groups, &format!("{path}.id"), "group", id)?;
        }
        Event::Join { group, users } => {
            Defined::known(&d.groups, &format!("{path}.group"), "group", group)?;
            for (j, u) in users.iter().enumerate() {
                d.user(&format!("{path}.users[{j}]"), u)?;
            }
        }
        Event::PostMessage { id, group, user, .. } => {
            Defined::known(&d.groups, &format!("{path}.group"), "group", group)?;
            d.user(&format!("{path}.user"), user)?;
            if let Some(id) = id {
                Defined::define(&mut d.messages, &format!("{path}.id"), "message", id)?;
            }
        }
        Event::Moderate { group, by, op } => {
            d.operator(&format!("{path}.by"), by)?;
            Defined::known(&d.groups, &format!("{path}.group"), "group", group)?;
            match op {
                ModerationOp::RemoveMessage { message } => {
                    Defined::known(&d.messages, &format!("{path}.op.message"), "message", message)?
                }
                ModerationOp::MuteUser { user } | ModerationOp::UnmuteUser { user } => {
                    d.user(&format!("{path}.op.user"), user)?
                }
                ModerationOp::CloseGroup => {}
            }
        }
        Event::Burst { parallel, events } => {
            if *parallel == 0 {
                return Err(schema(format!("{path}.parallel"), "must be at least 1"));
            }
            for (j, inner) in events.iter().enumerate() {
                if matches!(inner, Event::Burst { .. } | Event::Expect { .. }) {
                    return Err(schema(format!("{path}.events[{j}]"), "bursts hold plain actions only"));
                }
                check_event(d, &format!("{path}.events[{j}]"), inner)?;
            }
        }
        Event::Expect { check, .. } => {
            let p = format!("{path}.assert");
            match check {
                Check::OpenSosCount { .. } => {}
                Check::Receipt { case } | Check::CaseStatusEvent { case, .. } => {
                    Defined::known(&d.cases, &p, "case", case)?
                }
                Check::MessageHidden { message, viewer } => {
                    Defined::known(&d.messages, &p, "message", message)?;
                    d.user(&p, viewer)?;
                }
                Check::Delivered { alert, user } | Check::NotDelivered { alert, user } => {
                    Defined::known(&d.alerts, &p, "alert", alert)?;
                    d.user(&p, user)?;
                }
                Check::DeliveriesMatchOracle { alert } => Defined::known(&d.alerts, &p, "alert", alert)?,
                Check::ActiveAlertsAt { lat, lon, alerts } => {
                    coordinate(&p, *lat, *lon)?;
                    for a in alerts {
                        Defined::known(&d.alerts, &p, "alert", a)?;
                    }
                }
            }
        }
    }
    Ok(())
}
