use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{IndexFields, Kind};
use crate::model::{
    Alert, ChatGroup, ChatMessage, EvacuationRoute, IncidentReport, MediaObject, Membership,
    ResourcePoint, SosRequest, UserAccount, Zone,
};

/// A storable value: its kind, primary key and list-index fields.
pub trait Entity: Serialize + DeserializeOwned {
    const KIND: Kind;

    fn entity_id(&self) -> String;

    fn index_fields(&self) -> IndexFields;
}

fn fields(created_at: crate::time::Timestamp, status: Option<&str>, owner: Option<&str>) -> IndexFields {
    IndexFields { created_at, status: status.map(str::to_owned), owner: owner.map(str::to_owned) }
}

impl Entity for UserAccount {
    const KIND: Kind = Kind::User;

    fn entity_id(&self) -> String {
        self.id.to_string()
    }

    fn index_fields(&self) -> IndexFields {
        let role = match self.role {
            crate::model::Role::Citizen => "citizen",
            crate::model::Role::Operator => "operator",
        };
        // Owner is the phone so lookups by number stay index-backed.
        fields(self.created_at, Some(role), Some(self.phone.as_str()))
    }
}

impl Entity for Alert {
    const KIND: Kind = Kind::Alert;

    fn entity_id(&self) -> String {
        self.id.to_string()
    }

    fn index_fields(&self) -> IndexFields {
        fields(self.created_at, Some(self.status.as_str()), Some(self.source.operator_id.as_str()))
    }
}

impl Entity for SosRequest {
    const KIND: Kind = Kind::Sos;

    fn entity_id(&self) -> String {
        self.id.to_string()
    }

    fn index_fields(&self) -> IndexFields {
        fields(self.created_at, Some(self.status.as_str()), Some(self.user_id.as_str()))
    }
}

impl Entity for IncidentReport {
    const KIND: Kind = Kind::Report;

    fn entity_id(&self) -> String {
        self.id.to_string()
    }

    fn index_fields(&self) -> IndexFields {
        fields(self.created_at, Some(self.status.as_str()), Some(self.reporter_id.as_str()))
    }
}

impl Entity for MediaObject {
    const KIND: Kind = Kind::Media;

    fn entity_id(&self) -> String {
        self.hash.to_string()
    }

    fn index_fields(&self) -> IndexFields {
        fields(self.created_at, None, None)
    }
}

impl Entity for ChatGroup {
    const KIND: Kind = Kind::Group;

    fn entity_id(&self) -> String {
        self.id.to_string()
    }

    fn index_fields(&self) -> IndexFields {
        fields(self.created_at, Some(self.status.as_str()), Some(self.alert_id.as_str()))
    }
}

impl Entity for Membership {
    const KIND: Kind = Kind::Membership;

    fn entity_id(&self) -> String {
        Membership::key(&self.group_id, &self.user_id)
    }

    fn index_fields(&self) -> IndexFields {
        fields(self.joined_at, None, Some(self.group_id.as_str()))
    }
}

impl Membership {
    pub fn key(group: &crate::ids::GroupId, user: &crate::ids::UserId) -> String {
        format!("{group}:{user}")
    }
}

impl Entity for ChatMessage {
    const KIND: Kind = Kind::Message;

    fn entity_id(&self) -> String {
        self.id.to_string()
    }

    fn index_fields(&self) -> IndexFields {
        fields(self.created_at, Some(self.state.as_str()), Some(self.group_id.as_str()))
    }
}

impl Entity for Zone {
    const KIND: Kind = Kind::Zone;

    fn entity_id(&self) -> String {
        self.id.to_string()
    }

    fn index_fields(&self) -> IndexFields {
        fields(self.created_at, None, self.alert_id.as_ref().map(|a| a.as_str()))
    }
}

impl Entity for ResourcePoint {
    const KIND: Kind = Kind::Resource;

    fn entity_id(&self) -> String {
        self.id.to_string()
    }

    fn index_fields(&self) -> IndexFields {
        let kind = serde_json::to_value(self.kind).ok().and_then(|v| v.as_str().map(str::to_owned));
        IndexFields { created_at: self.created_at, status: kind, owner: None }
    }
}

impl Entity for EvacuationRoute {
    const KIND: Kind = Kind::Route;

    fn entity_id(&self) -> String {
        self.id.to_string()
    }

    fn index_fields(&self) -> IndexFields {
        fields(self.created_at, None, Some(self.alert_id.as_str()))
    }
}
