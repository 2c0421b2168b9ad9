//! Domain entities, their lifecycles and alert composition.

pub mod alert;
pub mod canonical;
pub mod entities;
pub mod lifecycle;

pub use alert::{
    compose_alert_payload, short_text_len, validate_alert, Alert, AlertDraft, AlertPayload,
    AlertSource, EffectiveWindow, Hazard, PayloadError, Severity, ValidationErrors,
    ValidationIssue, SHORT_TEXT_MAX_CHARS,
};
pub use entities::*;
pub use lifecycle::{
    transition, AlertStatus, EntityKind, GroupStatus, InvalidTransition, Lifecycle, MessageState,
    ReportStatus, SosStatus,
};
