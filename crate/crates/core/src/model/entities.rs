use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geo::{Coordinate, Geofence};
use crate::ids::{AlertId, GroupId, MessageId, ReportId, ResourceId, RouteId, SosId, UserId, ZoneId};
use crate::model::lifecycle::{GroupStatus, MessageState, ReportStatus, SosStatus};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("not an E.164 phone number: {0:?}")]
pub struct InvalidPhone(pub String);

/// E.164 number: `+` followed by 8 to 15 digits, no leading zero.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Phone(String);

impl Phone {
    pub fn parse(raw: &str) -> Result<Self, InvalidPhone> {
        let digits = raw.strip_prefix('+').ok_or_else(|| InvalidPhone(raw.to_owned()))?;
        let ok = (8..=15).contains(&digits.len())
            && digits.bytes().all(|b| b.is_ascii_digit())
            && !digits.starts_with('0');
        if ok {
            Ok(Phone(raw.to_owned()))
        } else {
            Err(InvalidPhone(raw.to_owned()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Phone {
    type Error = InvalidPhone;

    fn try_from(raw: String) -> Result<Self, Self::Error> {
        Phone::parse(&raw)
    }
}

impl From<Phone> for String {
    fn from(p: Phone) -> String {
        p.0
    }
}

impl fmt::Display for Phone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Citizen,
    Operator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocationFix {
    pub coordinate: Coordinate,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAccount {
    pub id: UserId,
    pub phone: Phone,
    pub verified: bool,
    pub display_name: String,
    pub role: Role,
    pub push_token: Option<String>,
    pub last_location: Option<LocationFix>,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosRequest {
    pub id: SosId,
    pub user_id: UserId,
    pub location: Coordinate,
    pub created_at: Timestamp,
    pub note: Option<String>,
    pub status: SosStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Image,
    Video,
    Audio,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("not a sha-256 hex digest: {0:?}")]
pub struct InvalidHash(pub String);

/// Lower-case hex SHA-256 digest of a media object.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ContentHash(String);

impl ContentHash {
    pub fn of(bytes: &[u8]) -> Self {
        ContentHash(hex::encode(Sha256::digest(bytes)))
    }

    pub fn parse(raw: &str) -> Result<Self, InvalidHash> {
        let ok = raw.len() == 64 && raw.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if ok {
            Ok(ContentHash(raw.to_owned()))
        } else {
            Err(InvalidHash(raw.to_owned()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ContentHash {
    type Error = InvalidHash;

    fn try_from(raw: String) -> Result<Self, Self::Error> {
        ContentHash::parse(&raw)
    }
}

impl From<ContentHash> for String {
    fn from(h: ContentHash) -> String {
        h.0
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MediaRef {
    pub hash: ContentHash,
    pub kind: MediaKind,
}

/// Ownership metadata for a stored media object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaObject {
    pub hash: ContentHash,
    pub kinds: BTreeSet<MediaKind>,
    pub size: u64,
    pub uploaders: BTreeSet<UserId>,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentReport {
    pub id: ReportId,
    pub reporter_id: UserId,
    pub location: Coordinate,
    pub description: String,
    pub media: Vec<MediaRef>,
    pub created_at: Timestamp,
    pub status: ReportStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatGroup {
    pub id: GroupId,
    pub alert_id: AlertId,
    pub title: String,
    pub area: Geofence,
    pub status: GroupStatus,
    pub created_by: UserId,
    pub muted_users: BTreeSet<UserId>,
    /// Sequence number the next accepted message will get.
    pub next_seq: u64,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub group_id: GroupId,
    pub user_id: UserId,
    pub joined_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub id: MessageId,
    pub group_id: GroupId,
    pub seq: u64,
    pub author_id: UserId,
    pub body: String,
    pub created_at: Timestamp,
    pub state: MessageState,
}

/// Display palette for map layers. Darker tones throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapColor {
    DarkRed,
    DarkGreen,
    DarkYellow,
    DarkBlue,
}

impl MapColor {
    /// Guideline overlays are always dark blue.
    pub const GUIDANCE: MapColor = MapColor::DarkBlue;

    pub fn hex(self) -> &'static str {
        match self {
            MapColor::DarkRed => "#8b0000",
            MapColor::DarkGreen => "#006400",
            MapColor::DarkYellow => "#b8860b",
            MapColor::DarkBlue => "#00008b",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneCategory {
    Affected,
    Safe,
    EvacuationPointArea,
}

impl ZoneCategory {
    pub fn color(self) -> MapColor {
        match self {
            ZoneCategory::Affected => MapColor::DarkRed,
            ZoneCategory::Safe => MapColor::DarkGreen,
            ZoneCategory::EvacuationPointArea => MapColor::DarkYellow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: ZoneId,
    pub alert_id: Option<AlertId>,
    pub category: ZoneCategory,
    pub area: Geofence,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    Shelter,
    Hospital,
    Police,
    ProtectedSpace,
    EvacuationPoint,
}

impl ResourceKind {
    pub fn parse(raw: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(raw.to_owned())).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourcePoint {
    pub id: ResourceId,
    pub kind: ResourceKind,
    pub name: String,
    pub location: Coordinate,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("route needs at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvacuationRoute {
    pub id: RouteId,
    pub alert_id: AlertId,
    pub waypoints: Vec<Coordinate>,
    pub destination: ResourceId,
    pub created_at: Timestamp,
}

impl EvacuationRoute {
    pub fn validate_waypoints(waypoints: &[Coordinate]) -> Result<(), RouteError> {
        if waypoints.len() < 2 {
            return Err(RouteError::TooFewWaypoints(waypoints.len()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phone_grammar() {
        assert!(Phone::parse("+306912345678").is_ok());
        assert!(Phone::parse("+12345678").is_ok());
        assert!(Phone::parse("12345").is_err());
        assert!(Phone::parse("+1234567").is_err());
        assert!(Phone::parse("+1234567890123456").is_err());
        assert!(Phone::parse("+0123456789").is_err());
        assert!(Phone::parse("+30 691234567").is_err());
        assert!(serde_json::from_str::<Phone>("\"+30abc\"").is_err());
    }

    #[test]
    fn empty_digest_vector() {
        assert_eq!(
            ContentHash::of(b"").as_str(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert!(ContentHash::parse("E3B0").is_err());
    }

    #[test]
    fn zone_palette() {
        assert_eq!(ZoneCategory::Affected.color(), MapColor::DarkRed);
        assert_eq!(ZoneCategory::Safe.color(), MapColor::DarkGreen);
        assert_eq!(ZoneCategory::EvacuationPointArea.color(), MapColor::DarkYellow);
        assert_eq!(MapColor::GUIDANCE, MapColor::DarkBlue);
    }

    #[test]
    fn route_needs_two_waypoints() {
        let p = Coordinate::new(1.0, 1.0).unwrap();
        assert_eq!(EvacuationRoute::validate_waypoints(&[p]), Err(RouteError::TooFewWaypoints(1)));
        assert!(EvacuationRoute::validate_waypoints(&[p, p]).is_ok());
    }

    #[test]
    fn resource_kind_parse() {
        assert_eq!(ResourceKind::parse("protected_space"), Some(ResourceKind::ProtectedSpace));
        assert_eq!(ResourceKind::parse("bakery"), None);
    }
}
