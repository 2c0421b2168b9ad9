//! Warning messages: validation against the message-content rules and the
//! notification payload derived from an active alert.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{BoundingBox, Geofence};
use crate::ids::{AlertId, UserId};
use crate::model::canonical;
use crate::model::lifecycle::AlertStatus;
use crate::time::Timestamp;

/// Maximum length of the push headline, in code points.
pub const SHORT_TEXT_MAX_CHARS: usize = 90;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hazard {
    Wildfire,
    Flood,
    Earthquake,
    Landslide,
    Storm,
    Other,
}

/// Ordered `Advisory < Watch < Warning < Emergency`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Advisory,
    Watch,
    Warning,
    Emergency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertSource {
    pub operator_id: UserId,
    pub authority: String,
}

/// Caller-supplied alert fields before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertDraft {
    pub hazard: Hazard,
    pub area: Geofence,
    pub severity: Severity,
    pub short_text: String,
    pub guidance_text: String,
    pub source: AlertSource,
    pub effective_from: Timestamp,
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub id: AlertId,
    pub hazard: Hazard,
    pub area: Geofence,
    pub severity: Severity,
    pub short_text: String,
    pub guidance_text: String,
    pub source: AlertSource,
    pub effective_from: Timestamp,
    pub expires_at: Timestamp,
    pub status: AlertStatus,
    pub created_at: Timestamp,
}

impl Alert {
    pub fn covers_time(&self, now: Timestamp) -> bool {
        self.effective_from <= now && now < self.expires_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "issue", content = "detail", rename_all = "snake_case")]
pub enum ValidationIssue {
    ShortTextTooLong(usize),
    WindowInverted,
    EmptyGuidance,
    EmptySource,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::ShortTextTooLong(n) => {
                write!(f, "short_text is {n} characters, limit {SHORT_TEXT_MAX_CHARS}")
            }
            ValidationIssue::WindowInverted => f.write_str("effective_from must precede expires_at"),
            ValidationIssue::EmptyGuidance => f.write_str("guidance_text is empty"),
            ValidationIssue::EmptySource => f.write_str("source operator or authority is empty"),
        }
    }
}

/// Every violated invariant of a draft, not just the first.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("alert validation failed: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct ValidationErrors(pub Vec<ValidationIssue>);

impl ValidationErrors {
    pub fn contains(&self, issue: &ValidationIssue) -> bool {
        self.0.contains(issue)
    }
}

pub fn short_text_len(text: &str) -> usize {
    text.chars().count()
}

fn draft_issues(d: &AlertDraft) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let len = short_text_len(&d.short_text);
    if len > SHORT_TEXT_MAX_CHARS {
        issues.push(ValidationIssue::ShortTextTooLong(len));
    }
    if d.effective_from >= d.expires_at {
        issues.push(ValidationIssue::WindowInverted);
    }
    if d.guidance_text.trim().is_empty() {
        issues.push(ValidationIssue::EmptyGuidance);
    }
    if d.source.authority.trim().is_empty() || d.source.operator_id.as_str().is_empty() {
        issues.push(ValidationIssue::EmptySource);
    }
    issues
}

/// Checks all alert invariants and, if they hold, builds a draft alert.
pub fn validate_alert(
    draft: AlertDraft,
    id: AlertId,
    created_at: Timestamp,
) -> Result<Alert, ValidationErrors> {
    let issues = draft_issues(&draft);
    if !issues.is_empty() {
        return Err(ValidationErrors(issues));
    }
    Ok(Alert {
        id,
        hazard: draft.hazard,
        area: draft.area,
        severity: draft.severity,
        short_text: draft.short_text,
        guidance_text: draft.guidance_text,
        source: draft.source,
        effective_from: draft.effective_from,
        expires_at: draft.expires_at,
        status: AlertStatus::Draft,
        created_at,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PayloadError {
    #[error("alert is missing required fields: {0:?}")]
    IncompleteAlert(Vec<&'static str>),
    #[error("alert is {0}, not active")]
    NotActive(AlertStatus),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveWindow {
    pub from: Timestamp,
    pub until: Timestamp,
}

/// What a device receives when an alert fans out to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertPayload {
    pub alert_id: AlertId,
    pub hazard: Hazard,
    pub severity: Severity,
    pub short_text: String,
    pub authority: String,
    pub window: EffectiveWindow,
    pub area_bbox: BoundingBox,
}

impl AlertPayload {
    pub fn to_bytes(&self) -> Vec<u8> {
        canonical::to_vec(self)
    }
}

/// Builds the push payload for an active alert. Pure in the alert value.
pub fn compose_alert_payload(a: &Alert) -> Result<AlertPayload, PayloadError> {
    let mut missing = Vec::new();
    if a.guidance_text.trim().is_empty() {
        missing.push("guidance_text");
    }
    if a.source.authority.trim().is_empty() || a.source.operator_id.as_str().is_empty() {
        missing.push("source");
    }
    if !missing.is_empty() {
        return Err(PayloadError::IncompleteAlert(missing));
    }
    if a.status != AlertStatus::Active {
        return Err(PayloadError::NotActive(a.status));
    }
    Ok(AlertPayload {
        alert_id: a.id.clone(),
        hazard: a.hazard,
        severity: a.severity,
        short_text: a.short_text.clone(),
        authority: a.source.authority.clone(),
        window: EffectiveWindow { from: a.effective_from, until: a.expires_at },
        area_bbox: a.area.bounding_box(),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geo::Coordinate;

    pub(crate) fn flood_draft() -> AlertDraft {
        AlertDraft {
            hazard: Hazard::Flood,
            area: Geofence::circle(Coordinate::new(38.25, 21.73).unwrap(), 3_000.0).unwrap(),
            severity: Severity::Warning,
            short_text: "Flash flood warning: move to higher ground now".into(),
            guidance_text: "Avoid underpasses and river banks. Do not drive through water.".into(),
            source: AlertSource { operator_id: UserId::from("usr_op"), authority: "Civil Protection".into() },
            effective_from: Timestamp(1_000),
            expires_at: Timestamp(10_000),
        }
    }

    fn with_text(n: usize) -> AlertDraft {
        AlertDraft { short_text: "α".repeat(n), ..flood_draft() }
    }

    #[test]
    fn short_text_boundary_counts_code_points() {
        // Two-byte Greek letters: 90 code points is 180 bytes and still fits.
        assert!(validate_alert(with_text(90), AlertId::from("alr_1"), Timestamp(0)).is_ok());
        let err = validate_alert(with_text(91), AlertId::from("alr_1"), Timestamp(0)).unwrap_err();
        assert_eq!(err.0, vec![ValidationIssue::ShortTextTooLong(91)]);
    }

    #[test]
    fn window_must_be_strict() {
        let d = AlertDraft { expires_at: Timestamp(1_000), ..flood_draft() };
        let err = validate_alert(d, AlertId::from("alr_1"), Timestamp(0)).unwrap_err();
        assert_eq!(err.0, vec![ValidationIssue::WindowInverted]);
    }

    #[test]
    fn reports_every_issue_together() {
        let d = AlertDraft {
            short_text: "x".repeat(120),
            guidance_text: "   ".into(),
            expires_at: Timestamp(0),
            source: AlertSource { operator_id: UserId::from("usr_op"), authority: String::new() },
            ..flood_draft()
        };
        let err = validate_alert(d, AlertId::from("alr_1"), Timestamp(0)).unwrap_err();
        assert_eq!(
            err.0,
            vec![
                ValidationIssue::ShortTextTooLong(120),
                ValidationIssue::WindowInverted,
                ValidationIssue::EmptyGuidance,
                ValidationIssue::EmptySource,
            ]
        );
    }

    #[test]
    fn each_violation_alone_is_rejected() {
        type Breaker = fn(&mut AlertDraft);
        let breakers: [(Breaker, ValidationIssue); 4] = [
            (|d| d.short_text = "y".repeat(91), ValidationIssue::ShortTextTooLong(91)),
            (|d| d.expires_at = d.effective_from, ValidationIssue::WindowInverted),
            (|d| d.guidance_text.clear(), ValidationIssue::EmptyGuidance),
            (|d| d.source.authority.clear(), ValidationIssue::EmptySource),
        ];
        assert!(validate_alert(flood_draft(), AlertId::from("alr_1"), Timestamp(0)).is_ok());
        for (brk, expected) in breakers {
            let mut d = flood_draft();
            brk(&mut d);
            let err = validate_alert(d, AlertId::from("alr_1"), Timestamp(0)).unwrap_err();
            assert_eq!(err.0, vec![expected]);
        }
    }

    fn active() -> Alert {
        let mut a = validate_alert(flood_draft(), AlertId::from("alr_7"), Timestamp(0)).unwrap();
        a.status = AlertStatus::Active;
        a
    }

    #[test]
    fn payload_has_all_fields_and_is_deterministic() {
        let a = active();
        let p = compose_alert_payload(&a).unwrap();
        let v = serde_json::to_value(&p).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 7);
        assert_eq!(p.alert_id.as_str(), "alr_7");
        assert_eq!(p.authority, "Civil Protection");
        assert_eq!(p.window, EffectiveWindow { from: Timestamp(1_000), until: Timestamp(10_000) });
        assert_eq!(p.to_bytes(), compose_alert_payload(&a.clone()).unwrap().to_bytes());
    }

    #[test]
    fn payload_rejects_incomplete_or_inactive() {
        let mut a = active();
        a.guidance_text.clear();
        assert_eq!(compose_alert_payload(&a), Err(PayloadError::IncompleteAlert(vec!["guidance_text"])));
        let mut b = active();
        b.status = AlertStatus::Draft;
        assert_eq!(compose_alert_payload(&b), Err(PayloadError::NotActive(AlertStatus::Draft)));
    }

    #[test]
    fn severity_orders_for_sorting() {
        assert!(Severity::Advisory < Severity::Watch);
        assert!(Severity::Watch < Severity::Warning);
        assert!(Severity::Warning < Severity::Emergency);
    }
}
