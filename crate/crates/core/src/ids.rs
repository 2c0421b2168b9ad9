//! Opaque string identifiers. Each kind carries a short prefix so a bare id
//! (for example in `/cases/{id}`) reveals what it names.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub const PREFIX: &'static str = $prefix;

            pub fn generate() -> Self {
                Self(format!("{}_{}", $prefix, uuid::Uuid::new_v4().simple()))
            }

            pub fn new(raw: impl Into<String>) -> Self {
                Self(raw.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }

            pub fn has_prefix(raw: &str) -> bool {
                raw.strip_prefix($prefix).is_some_and(|rest| rest.starts_with('_'))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(raw: &str) -> Self {
                Self(raw.to_owned())
            }
        }
    };
}

string_id!(UserId, "usr");
string_id!(AlertId, "alr");
string_id!(SosId, "sos");
string_id!(ReportId, "rpt");
string_id!(GroupId, "grp");
string_id!(
    /// Message ids are derived from their group and sequence number.
    MessageId,
    "msg"
);
string_id!(ResourceId, "res");
string_id!(RouteId, "rte");
string_id!(ZoneId, "zon");
string_id!(ChallengeId, "chl");

impl MessageId {
    pub fn for_seq(group: &GroupId, seq: u64) -> Self {
        Self(format!("msg_{}_{:010}", group.as_str().trim_start_matches("grp_"), seq))
    }
}
