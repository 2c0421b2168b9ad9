use thiserror::Error;

use crate::geo::GeoError;
use crate::model::{InvalidTransition, PayloadError, RouteError, ValidationErrors};
use crate::store::StoreError;

/// Coarse error classes. The gateway maps each to one HTTP status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Auth,
    Role,
    NotFound,
    Conflict,
    RateLimited,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid phone number")]
    InvalidPhone,
    #[error("too many verification requests for this number")]
    RateLimited,
    #[error("verification code does not match ({attempts_left} attempts left)")]
    CodeMismatch { attempts_left: u8 },
    #[error("verification challenge expired")]
    ChallengeExpired,
    #[error("verification attempts exhausted")]
    AttemptsExhausted,
    #[error("unknown verification challenge")]
    UnknownChallenge,
    #[error("SMS dispatch failed: {0}")]
    SmsFailed(String),
    #[error("not authenticated")]
    Unauthenticated,
    #[error("caller lacks the required role")]
    Forbidden,
    #[error(transparent)]
    Validation(#[from] ValidationErrors),
    #[error("invalid geometry: {0}")]
    InvalidGeofence(GeoError),
    #[error("invalid location: {0}")]
    InvalidLocation(GeoError),
    #[error("stale location update")]
    StaleLocation,
    #[error(transparent)]
    InvalidTransition(#[from] InvalidTransition),
    #[error("alert already expired")]
    AlreadyExpired,
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("unknown alert {0}")]
    UnknownAlert(String),
    #[error("unknown media reference {0}")]
    UnknownMediaRef(String),
    #[error("media exceeds {limit} bytes")]
    TooLarge { limit: usize },
    #[error("user location is outside the group area")]
    OutsideArea,
    #[error("group is closed")]
    GroupClosed,
    #[error("caller is not a group member")]
    NotMember,
    #[error("caller is muted in this group")]
    Muted,
    #[error("message body must be 1..={max} characters")]
    BodyInvalid { max: usize },
    #[error("unknown moderation target {0}")]
    UnknownTarget(String),
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error("concurrent modification, retry")]
    Conflict,
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for Error {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Conflict { .. } => Error::Conflict,
            StoreError::UnknownMediaRef(h) => Error::UnknownMediaRef(h.to_string()),
            other => Error::Store(other),
        }
    }
}

impl Error {
    /// Stable machine-readable code for API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidPhone => "invalid_phone",
            Error::RateLimited => "rate_limited",
            Error::CodeMismatch { .. } => "code_mismatch",
            Error::ChallengeExpired => "challenge_expired",
            Error::AttemptsExhausted => "attempts_exhausted",
            Error::UnknownChallenge => "unknown_challenge",
            Error::SmsFailed(_) => "sms_failed",
            Error::Unauthenticated => "unauthenticated",
            Error::Forbidden => "forbidden",
            Error::Validation(_) => "validation",
            Error::InvalidGeofence(_) => "invalid_geofence",
            Error::InvalidLocation(_) => "invalid_location",
            Error::StaleLocation => "stale_location",
            Error::InvalidTransition(_) => "invalid_transition",
            Error::AlreadyExpired => "already_expired",
            Error::Payload(PayloadError::IncompleteAlert(_)) => "incomplete_alert",
            Error::Payload(PayloadError::NotActive(_)) => "alert_not_active",
            Error::NotFound { .. } => "not_found",
            Error::UnknownAlert(_) => "unknown_alert",
            Error::UnknownMediaRef(_) => "unknown_media_ref",
            Error::TooLarge { .. } => "too_large",
            Error::OutsideArea => "outside_area",
            Error::GroupClosed => "group_closed",
            Error::NotMember => "not_member",
            Error::Muted => "muted",
            Error::BodyInvalid { .. } => "body_invalid",
            Error::UnknownTarget(_) => "unknown_target",
            Error::BadRequest(_) => "bad_request",
            Error::Route(_) => "invalid_route",
            Error::Conflict => "conflict",
            Error::Store(_) => "internal",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidPhone
            | Error::Validation(_)
            | Error::InvalidGeofence(_)
            | Error::InvalidLocation(_)
            | Error::TooLarge { .. }
            | Error::BodyInvalid { .. }
            | Error::BadRequest(_)
            | Error::Route(_)
            | Error::Payload(_)
            | Error::UnknownMediaRef(_) => ErrorClass::Validation,
            Error::Unauthenticated
            | Error::CodeMismatch { .. }
            | Error::ChallengeExpired
            | Error::AttemptsExhausted => ErrorClass::Auth,
            Error::Forbidden | Error::NotMember | Error::Muted | Error::OutsideArea => ErrorClass::Role,
            Error::NotFound { .. }
            | Error::UnknownAlert(_)
            | Error::UnknownChallenge
            | Error::UnknownTarget(_) => ErrorClass::NotFound,
            Error::InvalidTransition(_)
            | Error::AlreadyExpired
            | Error::GroupClosed
            | Error::StaleLocation
            | Error::Conflict => ErrorClass::Conflict,
            Error::RateLimited => ErrorClass::RateLimited,
            Error::SmsFailed(_) | Error::Store(_) => ErrorClass::Internal,
        }
    }

    /// Structured detail for API error bodies.
    pub fn details(&self) -> serde_json::Value {
        match self {
            Error::Validation(v) => serde_json::to_value(&v.0).unwrap_or_default(),
            Error::InvalidTransition(t) => serde_json::json!({"kind": t.kind, "from": t.from, "to": t.to}),
            Error::CodeMismatch { attempts_left } => serde_json::json!({"attempts_left": attempts_left}),
            Error::TooLarge { limit } => serde_json::json!({"limit": limit}),
            Error::BodyInvalid { max } => serde_json::json!({"max": max}),
            Error::Payload(PayloadError::IncompleteAlert(f)) => serde_json::json!({"missing": f}),
            _ => serde_json::Value::Null,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
