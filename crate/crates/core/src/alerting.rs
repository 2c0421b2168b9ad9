//! Alert lifecycle and geo-targeted fan-out.
//!
//! Activation writes the status change and one ledger row per recipient in a
//! single store batch. The ledger is keyed by `(alert, user)` and every row is
//! written with an "absent" precondition, so no interleaving of activations or
//! location updates can notify a user twice for the same alert.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dispatch::PushJob;
use crate::error::{Error, Result};
use crate::events::EventKind;
use crate::geo::Coordinate;
use crate::ids::{AlertId, UserId};
use crate::model::{
    compose_alert_payload, transition, validate_alert, Alert, AlertDraft, AlertPayload, AlertStatus,
    UserAccount,
};
use crate::service::{Principal, Service};
use crate::store::{Entity, Expect, Filter, IndexFields, Kind, Op, Page, StoreError, StoreExt};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Push,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryOutcome {
    Pending,
    Delivered,
    Failed,
    /// Recipient has no push token; the stream event is the only channel.
    NoToken,
}

impl DeliveryOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            DeliveryOutcome::Pending => "pending",
            DeliveryOutcome::Delivered => "delivered",
            DeliveryOutcome::Failed => "failed",
            DeliveryOutcome::NoToken => "no_token",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryTrigger {
    Activation,
    AreaEntry,
}

/// One row of the exactly-once ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub alert_id: AlertId,
    pub user_id: UserId,
    pub enqueued_at: Timestamp,
    pub channel: Channel,
    pub attempt_count: u32,
    pub outcome: DeliveryOutcome,
    pub delivered_at: Option<Timestamp>,
    pub trigger: DeliveryTrigger,
}

impl DeliveryRecord {
    pub fn ledger_key(alert: &AlertId, user: &UserId) -> String {
        format!("{alert}:{user}")
    }

    pub fn key(&self) -> String {
        Self::ledger_key(&self.alert_id, &self.user_id)
    }
}

impl Entity for DeliveryRecord {
    const KIND: Kind = Kind::Delivery;

    fn entity_id(&self) -> String {
        self.key()
    }

    fn index_fields(&self) -> IndexFields {
        IndexFields {
            created_at: self.enqueued_at,
            status: Some(self.outcome.as_str().to_owned()),
            owner: Some(self.alert_id.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationSummary {
    pub alert_id: AlertId,
    pub recipient_count: usize,
}

fn alert_event(alert: &Alert, payload: &AlertPayload) -> serde_json::Value {
    json!({
        "alert": payload,
        "guidance_text": alert.guidance_text,
        "area": alert.area,
    })
}

impl Service {
    fn load_alert(&self, id: &AlertId) -> Result<crate::store::Versioned<Alert>> {
        match self.store.load::<Alert>(id.as_str()) {
            Ok(a) => Ok(a),
            Err(StoreError::NotFound { .. }) => Err(Error::NotFound { kind: "alert", id: id.to_string() }),
            Err(e) => Err(e.into()),
        }
    }

    /// Validates and stores a draft. Drafts are invisible to citizens.
    pub fn create_alert(&self, who: &Principal, mut draft: AlertDraft) -> Result<Alert> {
        who.require_operator()?;
        draft.source.operator_id = who.user_id.clone();
        let alert = validate_alert(draft, AlertId::generate(), self.now())?;
        self.store.put(&alert, Expect::Absent)?;
        Ok(alert)
    }

    /// Operators see any alert; citizens only non-draft ones.
    pub fn alert(&self, who: &Principal, id: &AlertId) -> Result<Alert> {
        let a = self.load_alert(id)?.value;
        if a.status == AlertStatus::Draft && !who.is_operator() {
            return Err(Error::NotFound { kind: "alert", id: id.to_string() });
        }
        Ok(a)
    }

    pub fn list_alerts(&self, who: &Principal, status: Option<AlertStatus>, page: Page) -> Result<Vec<Alert>> {
        who.require_operator()?;
        let filter = match status {
            Some(s) => Filter::status(s.as_str()),
            None => Filter::all(),
        };
        Ok(self.store.list_of::<Alert>(&filter, page)?)
    }

    /// Moves a draft to active and fans it out to every verified user whose
    /// last-known location is inside the area at this instant.
    pub fn activate_alert(&self, who: &Principal, id: &AlertId) -> Result<ActivationSummary> {
        who.require_operator()?;
        let current = self.load_alert(id)?;
        let mut alert = current.value;
        transition(alert.status, AlertStatus::Active)?;
        let now = self.now();
        if now >= alert.expires_at {
            return Err(Error::AlreadyExpired);
        }
        alert.status = AlertStatus::Active;
        let payload = compose_alert_payload(&alert)?;

        // Holding the index read lock until commit means a concurrent location
        // update either lands in this snapshot or runs its area-entry hook
        // after the alert is visibly active.
        let index = self.index.read();
        let mut candidates: Vec<UserId> = index.query(&alert.area).into_iter().collect();
        candidates.sort();
        let mut recipients = Vec::with_capacity(candidates.len());
        for uid in candidates {
            if let Some(u) = self.store.find::<UserAccount>(uid.as_str())? {
                if u.value.verified && u.value.last_location.is_some() {
                    recipients.push(u.value);
                }
            }
        }

        let mut ops = Vec::with_capacity(recipients.len() + 1);
        ops.push(Op::put(&alert, Expect::Version(current.version)));
        let records: Vec<DeliveryRecord> = recipients
            .iter()
            .map(|u| DeliveryRecord {
                alert_id: alert.id.clone(),
                user_id: u.id.clone(),
                enqueued_at: now,
                channel: Channel::Push,
                attempt_count: 0,
                outcome: if u.push_token.is_some() { DeliveryOutcome::Pending } else { DeliveryOutcome::NoToken },
                delivered_at: None,
                trigger: DeliveryTrigger::Activation,
            })
            .collect();
        ops.extend(records.iter().map(|r| Op::put(r, Expect::Absent)));

        match self.store.atomically(ops) {
            Ok(_) => {}
            Err(StoreError::Conflict { .. }) => {
                let latest = self.load_alert(id)?.value;
                transition(latest.status, AlertStatus::Active)?;
                return Err(Error::Conflict);
            }
            Err(e) => return Err(e.into()),
        }
        drop(index);

        self.fan_out(&alert, &payload, &recipients, now);
        let ops_payload = json!({"alert": payload, "recipient_count": recipients.len(), "status": "active"});
        self.events.publish_many(&self.operator_ids()?, EventKind::Alert, &ops_payload, now);
        tracing::info!(alert = %alert.id, recipients = recipients.len(), "alert activated");
        Ok(ActivationSummary { alert_id: alert.id, recipient_count: recipients.len() })
    }

    fn fan_out(&self, alert: &Alert, payload: &AlertPayload, recipients: &[UserAccount], now: Timestamp) {
        let bytes = payload.to_bytes();
        let jobs = recipients
            .iter()
            .filter_map(|u| {
                u.push_token.as_ref().map(|token| PushJob {
                    ledger_key: DeliveryRecord::ledger_key(&alert.id, &u.id),
                    token: token.clone(),
                    payload: bytes.clone(),
                    attempts_made: 0,
                })
            })
            .collect();
        self.dispatcher.enqueue(jobs);
        let event = alert_event(alert, payload);
        self.events.publish_many(recipients.iter().map(|u| &u.id), EventKind::Alert, &event, now);
    }

    /// Delivers active alerts covering `p` that `user` has not had yet.
    pub(crate) fn deliver_on_entry(&self, user: &UserId, p: Coordinate) -> Result<Vec<AlertId>> {
        let now = self.now();
        let account = self.user(user)?;
        if !account.verified {
            return Ok(Vec::new());
        }
        let mut delivered = Vec::new();
        for alert in self.store.list_of::<Alert>(&Filter::status("active"), Page::ALL)? {
            if now >= alert.expires_at || !alert.area.contains(p) {
                continue;
            }
            let rec = DeliveryRecord {
                alert_id: alert.id.clone(),
                user_id: user.clone(),
                enqueued_at: now,
                channel: Channel::Push,
                attempt_count: 0,
                outcome: if account.push_token.is_some() { DeliveryOutcome::Pending } else { DeliveryOutcome::NoToken },
                delivered_at: None,
                trigger: DeliveryTrigger::AreaEntry,
            };
            match self.store.put(&rec, Expect::Absent) {
                Ok(_) => {}
                Err(StoreError::Conflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
            let payload = compose_alert_payload(&alert)?;
            self.fan_out(&alert, &payload, std::slice::from_ref(&account), now);
            delivered.push(alert.id);
        }
        Ok(delivered)
    }

    fn set_alert_status(&self, id: &AlertId, to: AlertStatus) -> Result<Alert> {
        loop {
            let current = self.load_alert(id)?;
            let mut alert = current.value;
            alert.status = transition(alert.status, to)?;
            match self.store.put(&alert, Expect::Version(current.version)) {
                Ok(_) => return Ok(alert),
                Err(StoreError::Conflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn cancel_alert(&self, who: &Principal, id: &AlertId) -> Result<Alert> {
        who.require_operator()?;
        let alert = self.set_alert_status(id, AlertStatus::Cancelled)?;
        let payload = json!({"alert_id": alert.id, "status": "cancelled"});
        self.events.publish_many(&self.operator_ids()?, EventKind::Alert, &payload, self.now());
        Ok(alert)
    }

    /// Drafts are discarded rather than cancelled.
    pub fn delete_draft(&self, who: &Principal, id: &AlertId) -> Result<()> {
        who.require_operator()?;
        let current = self.load_alert(id)?;
        if current.value.status != AlertStatus::Draft {
            return Err(Error::BadRequest("only drafts can be deleted".into()));
        }
        self.store.atomically(vec![Op::delete::<Alert>(id.as_str(), Expect::Version(current.version))])?;
        Ok(())
    }

    /// Expires every active alert whose window has closed by `now`.
    pub fn expire_sweep(&self, now: Timestamp) -> Result<usize> {
        let mut expired = 0;
        for alert in self.store.list_of::<Alert>(&Filter::status("active"), Page::ALL)? {
            if alert.expires_at <= now {
                match self.set_alert_status(&alert.id, AlertStatus::Expired) {
                    Ok(_) => expired += 1,
                    // Cancelled or expired concurrently.
                    Err(Error::InvalidTransition(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(expired)
    }

    /// Active alerts covering `p` at `now`, most severe first, then newest.
    pub fn active_alerts_at(&self, p: Coordinate, now: Timestamp) -> Result<Vec<Alert>> {
        let mut out: Vec<Alert> = self
            .store
            .list_of::<Alert>(&Filter::status("active"), Page::ALL)?
            .into_iter()
            .filter(|a| a.covers_time(now) && a.area.contains(p))
            .collect();
        out.sort_by(|a, b| {
            b.severity
                .cmp(&a.severity)
                .then(b.effective_from.cmp(&a.effective_from))
                .then(a.id.cmp(&b.id))
        });
        Ok(out)
    }

    /// Ledger rows for an alert.
    pub fn deliveries(&self, who: &Principal, alert: &AlertId) -> Result<Vec<DeliveryRecord>> {
        who.require_operator()?;
        Ok(self.store.list_of::<DeliveryRecord>(&Filter::owner(alert.as_str()), Page::ALL)?)
    }

    /// Users with a ledger row for `alert`.
    pub fn recipients_of(&self, alert: &AlertId) -> Result<HashSet<UserId>> {
        Ok(self
            .store
            .list_of::<DeliveryRecord>(&Filter::owner(alert.as_str()), Page::ALL)?
            .into_iter()
            .map(|r| r.user_id)
            .collect())
    }
}
