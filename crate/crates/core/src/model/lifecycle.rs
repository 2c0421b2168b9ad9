//! Status machines for every entity with a lifecycle. Each relation is a DAG.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Alert,
    Sos,
    Report,
    ChatGroup,
    ChatMessage,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EntityKind::Alert => "alert",
            EntityKind::Sos => "sos",
            EntityKind::Report => "report",
            EntityKind::ChatGroup => "chat_group",
            EntityKind::ChatMessage => "chat_message",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {kind} transition {from} -> {to}")]
pub struct InvalidTransition {
    pub kind: EntityKind,
    pub from: String,
    pub to: String,
}

pub trait Lifecycle: Copy + Eq + fmt::Debug + fmt::Display + 'static {
    const KIND: EntityKind;

    fn all() -> &'static [Self];

    fn edges() -> &'static [(Self, Self)];

    fn can_transition(self, to: Self) -> bool {
        Self::edges().contains(&(self, to))
    }

    /// Statuses reachable in one step.
    fn next(self) -> Vec<Self> {
        Self::edges().iter().filter(|(f, _)| *f == self).map(|(_, t)| *t).collect()
    }

    fn is_terminal(self) -> bool {
        self.next().is_empty()
    }
}

/// Returns `requested` iff `(current, requested)` is an edge of the lifecycle.
pub fn transition<S: Lifecycle>(current: S, requested: S) -> Result<S, InvalidTransition> {
    if current.can_transition(requested) {
        Ok(requested)
    } else {
        Err(InvalidTransition { kind: S::KIND, from: current.to_string(), to: requested.to_string() })
    }
}

macro_rules! status_enum {
    ($name:ident, $kind:expr, [$($variant:ident => $text:literal),+ $(,)?], edges: [$(($from:ident, $to:ident)),+ $(,)?]) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn parse(raw: &str) -> Option<Self> {
                match raw {
                    $($text => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl Lifecycle for $name {
            const KIND: EntityKind = $kind;

            fn all() -> &'static [Self] {
                &[$($name::$variant),+]
            }

            fn edges() -> &'static [(Self, Self)] {
                &[$(($name::$from, $name::$to)),+]
            }
        }
    };
}

status_enum!(
    AlertStatus,
    EntityKind::Alert,
    [Draft => "draft", Active => "active", Cancelled => "cancelled", Expired => "expired"],
    edges: [(Draft, Active), (Active, Cancelled), (Active, Expired)]
);

status_enum!(
    SosStatus,
    EntityKind::Sos,
    [Open => "open", Acknowledged => "acknowledged", Responding => "responding", Closed => "closed"],
    edges: [
        (Open, Acknowledged),
        (Acknowledged, Responding),
        (Responding, Closed),
        (Open, Closed),
        (Acknowledged, Closed),
    ]
);

status_enum!(
    ReportStatus,
    EntityKind::Report,
    [
        Submitted => "submitted",
        Acknowledged => "acknowledged",
        InProgress => "in_progress",
        Resolved => "resolved",
        Dismissed => "dismissed",
    ],
    edges: [
        (Submitted, Acknowledged),
        (Acknowledged, InProgress),
        (InProgress, Resolved),
        (Submitted, Dismissed),
        (Acknowledged, Dismissed),
    ]
);

status_enum!(
    GroupStatus,
    EntityKind::ChatGroup,
    [Open => "open", Closed => "closed"],
    edges: [(Open, Closed)]
);

status_enum!(
    MessageState,
    EntityKind::ChatMessage,
    [Visible => "visible", Removed => "removed"],
    edges: [(Visible, Removed)]
);
