//! SOS requests, incident reports, media and the operator case workflow.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::events::EventKind;
use crate::geo::Coordinate;
use crate::ids::{ReportId, SosId, UserId};
use crate::model::{
    transition, ContentHash, IncidentReport, MediaKind, MediaObject, MediaRef, ReportStatus, SosRequest,
    SosStatus,
};
use crate::service::{Principal, Service};
use crate::store::{Expect, Filter, Page, StoreError, StoreExt};
use crate::time::Timestamp;

pub const NOTE_MAX_CHARS: usize = 1_000;
pub const DESCRIPTION_MAX_CHARS: usize = 4_000;
pub const MAX_MEDIA_PER_REPORT: usize = 20;

/// Synchronous acknowledgment handed back on submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub case_id: String,
    pub case_kind: CaseKind,
    pub status: String,
    pub created_at: Timestamp,
    pub place: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    Sos,
    Report,
}

/// Either kind of case, as returned by the status workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case_kind", rename_all = "snake_case")]
pub enum Case {
    Sos(SosRequest),
    Report(IncidentReport),
}

impl Case {
    pub fn id(&self) -> &str {
        match self {
            Case::Sos(s) => s.id.as_str(),
            Case::Report(r) => r.id.as_str(),
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Case::Sos(s) => s.status.as_str(),
            Case::Report(r) => r.status.as_str(),
        }
    }

    pub fn owner(&self) -> &UserId {
        match self {
            Case::Sos(s) => &s.user_id,
            Case::Report(r) => &r.reporter_id,
        }
    }
}

fn check_len(field: &str, text: &str, max: usize) -> Result<()> {
    if text.chars().count() > max {
        return Err(Error::BadRequest(format!("{field} exceeds {max} characters")));
    }
    Ok(())
}

impl Service {
    /// Keeps the index current from a position the device just reported.
    fn note_position(&self, user: &UserId, p: Coordinate, now: Timestamp) -> Result<()> {
        match self.record_location(user, p, now) {
            Ok(()) => self.deliver_on_entry(user, p).map(drop),
            Err(Error::StaleLocation) => Ok(()),
            Err(e) => Err(e),
        }
    }

    fn notify_operators(&self, payload: serde_json::Value, now: Timestamp) -> Result<()> {
        self.events.publish_many(&self.operator_ids()?, EventKind::CaseStatus, &payload, now);
        Ok(())
    }

    /// One call, one receipt. Nothing further is asked of the caller.
    pub fn submit_sos(&self, who: &Principal, location: Coordinate, note: Option<String>) -> Result<Receipt> {
        self.require_verified(who)?;
        let note = note.map(|n| n.trim().to_owned()).filter(|n| !n.is_empty());
        if let Some(n) = &note {
            check_len("note", n, NOTE_MAX_CHARS)?;
        }
        let now = self.now();
        let sos = SosRequest {
            id: SosId::generate(),
            user_id: who.user_id.clone(),
            location,
            created_at: now,
            note,
            status: SosStatus::Open,
        };
        self.store.put(&sos, Expect::Absent)?;
        self.note_position(&who.user_id, location, now)?;
        let place = self.providers.geocoder.reverse_geocode(location);
        self.notify_operators(
            json!({"case_id": sos.id, "case_kind": "sos", "status": "open", "location": location, "place": place, "new": true}),
            now,
        )?;
        Ok(Receipt { case_id: sos.id.to_string(), case_kind: CaseKind::Sos, status: "open".into(), created_at: now, place })
    }

    /// Media may stand alone, so an empty description is fine when at least
    /// one attachment is present.
    pub fn submit_report(
        &self,
        who: &Principal,
        location: Coordinate,
        description: &str,
        media: Vec<MediaRef>,
    ) -> Result<Receipt> {
        self.require_verified(who)?;
        let description = description.trim().to_owned();
        check_len("description", &description, DESCRIPTION_MAX_CHARS)?;
        if description.is_empty() && media.is_empty() {
            return Err(Error::BadRequest("a report needs a description or media".into()));
        }
        if media.len() > MAX_MEDIA_PER_REPORT {
            return Err(Error::BadRequest(format!("at most {MAX_MEDIA_PER_REPORT} media items per report")));
        }
        for m in &media {
            match self.store.find::<MediaObject>(m.hash.as_str())? {
                Some(obj) if obj.value.kinds.contains(&m.kind) => {}
                _ => return Err(Error::UnknownMediaRef(m.hash.to_string())),
            }
        }
        let now = self.now();
        let report = IncidentReport {
            id: ReportId::generate(),
            reporter_id: who.user_id.clone(),
            location,
            description,
            media,
            created_at: now,
            status: ReportStatus::Submitted,
        };
        self.store.put(&report, Expect::Absent)?;
        self.note_position(&who.user_id, location, now)?;
        let place = self.providers.geocoder.reverse_geocode(location);
        self.notify_operators(
            json!({"case_id": report.id, "case_kind": "report", "status": "submitted", "location": location, "place": place, "new": true}),
            now,
        )?;
        Ok(Receipt {
            case_id: report.id.to_string(),
            case_kind: CaseKind::Report,
            status: "submitted".into(),
            created_at: now,
            place,
        })
    }

    /// Reporters see their own cases; operators see all.
    pub fn case(&self, who: &Principal, id: &str) -> Result<Case> {
        let case = self.load_case(id)?;
        if !who.is_operator() && case.owner() != &who.user_id {
            return Err(Error::Forbidden);
        }
        Ok(case)
    }

    fn load_case(&self, id: &str) -> Result<Case> {
        let not_found = || Error::NotFound { kind: "case", id: id.to_owned() };
        let found = if SosId::has_prefix(id) {
            self.store.find::<SosRequest>(id)?.map(|v| Case::Sos(v.value))
        } else if ReportId::has_prefix(id) {
            self.store.find::<IncidentReport>(id)?.map(|v| Case::Report(v.value))
        } else {
            None
        };
        found.ok_or_else(not_found)
    }

    pub fn list_cases(
        &self,
        who: &Principal,
        kind: CaseKind,
        status: Option<&str>,
        page: Page,
    ) -> Result<Vec<Case>> {
        who.require_operator()?;
        let filter = match status {
            Some(s) => Filter::status(s),
            None => Filter::all(),
        };
        Ok(match kind {
            CaseKind::Sos => self.store.list_of::<SosRequest>(&filter, page)?.into_iter().map(Case::Sos).collect(),
            CaseKind::Report => {
                self.store.list_of::<IncidentReport>(&filter, page)?.into_iter().map(Case::Report).collect()
            }
        })
    }

    /// Moves a case along its workflow and tells the reporter.
    pub fn set_status(&self, who: &Principal, id: &str, status: &str) -> Result<Case> {
        who.require_operator()?;
        let bad_status = || Error::BadRequest(format!("unknown status {status:?}"));
        let (case, previous) = loop {
            let attempt = if SosId::has_prefix(id) {
                let to = SosStatus::parse(status).ok_or_else(bad_status)?;
                let current = self.find_case::<SosRequest>(id)?;
                let mut sos = current.value;
                let from = sos.status.as_str();
                sos.status = transition(sos.status, to)?;
                self.store.put(&sos, Expect::Version(current.version)).map(|_| (Case::Sos(sos), from))
            } else if ReportId::has_prefix(id) {
                let to = ReportStatus::parse(status).ok_or_else(bad_status)?;
                let current = self.find_case::<IncidentReport>(id)?;
                let mut rep = current.value;
                let from = rep.status.as_str();
                rep.status = transition(rep.status, to)?;
                self.store.put(&rep, Expect::Version(current.version)).map(|_| (Case::Report(rep), from))
            } else {
                return Err(Error::NotFound { kind: "case", id: id.to_owned() });
            };
            match attempt {
                Ok(done) => break done,
                Err(StoreError::Conflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        };
        let now = self.now();
        let kind = match case {
            Case::Sos(_) => "sos",
            Case::Report(_) => "report",
        };
        let payload = json!({"case_id": case.id(), "case_kind": kind, "status": case.status(), "previous": previous});
        self.events.publish(case.owner(), EventKind::CaseStatus, payload.clone(), now);
        let operators: Vec<UserId> = self.operator_ids()?.into_iter().filter(|u| u != case.owner()).collect();
        self.events.publish_many(&operators, EventKind::CaseStatus, &payload, now);
        Ok(case)
    }

    fn find_case<E: crate::store::Entity>(&self, id: &str) -> Result<crate::store::Versioned<E>> {
        self.store
            .find::<E>(id)?
            .ok_or_else(|| Error::NotFound { kind: "case", id: id.to_owned() })
    }

    /// Content-addressed upload. Identical bytes give the same reference.
    pub fn store_media(&self, who: &Principal, bytes: &[u8], kind: MediaKind) -> Result<MediaRef> {
        self.require_verified(who)?;
        let limit = self.config.media_max_bytes;
        if bytes.len() > limit {
            return Err(Error::TooLarge { limit });
        }
        let hash = self.store.media_put(bytes)?;
        let now = self.now();
        loop {
            let (mut obj, expect) = match self.store.find::<MediaObject>(hash.as_str())? {
                Some(v) => (v.value, Expect::Version(v.version)),
                None => (
                    MediaObject {
                        hash: hash.clone(),
                        kinds: BTreeSet::new(),
                        size: bytes.len() as u64,
                        uploaders: BTreeSet::new(),
                        created_at: now,
                    },
                    Expect::Absent,
                ),
            };
            let changed = obj.kinds.insert(kind) | obj.uploaders.insert(who.user_id.clone());
            if !changed {
                break;
            }
            match self.store.put(&obj, expect) {
                Ok(_) => break,
                Err(StoreError::Conflict { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Ok(MediaRef { hash, kind })
    }

    /// Uploaders and operators only.
    pub fn fetch_media(&self, who: &Principal, hash: &ContentHash) -> Result<(Vec<u8>, MediaObject)> {
        let obj = self
            .store
            .find::<MediaObject>(hash.as_str())?
            .ok_or_else(|| Error::UnknownMediaRef(hash.to_string()))?
            .value;
        if !who.is_operator() && !obj.uploaders.contains(&who.user_id) {
            return Err(Error::Forbidden);
        }
        let bytes = self.store.media_get(hash)?;
        Ok((bytes, obj))
    }
}
