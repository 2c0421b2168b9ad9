//! Operator-opened, area-gated group chat with post-moderation.
//!
//! Messages are visible as soon as they are accepted and can be removed later.
//! Appends within a group are serialized so sequence numbers are gapless and
//! stream events leave in sequence order.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeSet;
use std::hash::{Hash, Hasher};

use parking_lot::MutexGuard;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::events::EventKind;
use crate::geo::{Coordinate, Geofence};
use crate::ids::{AlertId, GroupId, MessageId, UserId};
use crate::model::{
    transition, Alert, AlertStatus, ChatGroup, ChatMessage, GroupStatus, Membership, MessageState, UserAccount,
};
use crate::service::{Principal, Service};
use crate::store::{Expect, Filter, Op, Page, StoreError, StoreExt, Versioned};

pub const TITLE_MAX_CHARS: usize = 120;
pub const REDACTED_PLACEHOLDER: &str = "[message removed by moderator]";

/// A message as members see it. Removed messages keep their slot in the
/// sequence but never their body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageView {
    pub id: MessageId,
    pub group_id: GroupId,
    pub seq: u64,
    pub author_id: UserId,
    pub body: String,
    pub state: MessageState,
    pub created_at: crate::time::Timestamp,
}

impl From<ChatMessage> for MessageView {
    fn from(m: ChatMessage) -> Self {
        let body = match m.state {
            MessageState::Visible => m.body,
            MessageState::Removed => REDACTED_PLACEHOLDER.to_owned(),
        };
        MessageView {
            id: m.id,
            group_id: m.group_id,
            seq: m.seq,
            author_id: m.author_id,
            body,
            state: m.state,
            created_at: m.created_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ModerationAction {
    RemoveMessage { message_id: MessageId },
    MuteUser { user_id: UserId },
    UnmuteUser { user_id: UserId },
    CloseGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModerationOutcome {
    pub group: ChatGroup,
    pub message: Option<MessageView>,
}

impl Service {
    fn group_lock(&self, group: &GroupId) -> MutexGuard<'_, ()> {
        let mut h = DefaultHasher::new();
        group.hash(&mut h);
        self.chat_locks[(h.finish() as usize) % self.chat_locks.len()].lock()
    }

    fn load_group(&self, id: &GroupId) -> Result<Versioned<ChatGroup>> {
        self.store
            .find::<ChatGroup>(id.as_str())?
            .ok_or_else(|| Error::NotFound { kind: "group", id: id.to_string() })
    }

    fn is_member(&self, group: &GroupId, user: &UserId) -> Result<bool> {
        Ok(self.store.find::<Membership>(&Membership::key(group, user))?.is_some())
    }

    fn member_ids(&self, group: &GroupId) -> Result<BTreeSet<UserId>> {
        Ok(self
            .store
            .list_of::<Membership>(&Filter::owner(group.as_str()), Page::ALL)?
            .into_iter()
            .map(|m| m.user_id)
            .collect())
    }

    /// Members plus operators, who monitor every group.
    fn group_audience(&self, group: &GroupId) -> Result<BTreeSet<UserId>> {
        let mut out = self.member_ids(group)?;
        out.extend(self.operator_ids()?);
        Ok(out)
    }

    pub fn open_group(&self, who: &Principal, alert_id: &AlertId, area: Geofence, title: &str) -> Result<ChatGroup> {
        who.require_operator()?;
        let title = title.trim();
        let len = title.chars().count();
        if len == 0 || len > TITLE_MAX_CHARS {
            return Err(Error::BadRequest(format!("title must be 1..={TITLE_MAX_CHARS} characters")));
        }
        if self.store.find::<Alert>(alert_id.as_str())?.is_none() {
            return Err(Error::UnknownAlert(alert_id.to_string()));
        }
        let now = self.now();
        let group = ChatGroup {
            id: GroupId::generate(),
            alert_id: alert_id.clone(),
            title: title.to_owned(),
            area,
            status: GroupStatus::Open,
            created_by: who.user_id.clone(),
            muted_users: BTreeSet::new(),
            next_seq: 1,
            created_at: now,
        };
        self.store.put(&group, Expect::Absent)?;
        let mut audience: BTreeSet<UserId> = self.index.read().query(&group.area).into_iter().collect();
        audience.extend(self.operator_ids()?);
        let payload = json!({"group_id": group.id, "alert_id": group.alert_id, "title": group.title, "area": group.area});
        self.events.publish_many(&audience, EventKind::GroupOpened, &payload, now);
        Ok(group)
    }

    /// Open groups covering `p` whose alert is currently active. This is the
    /// only way citizens discover groups.
    pub fn groups_at(&self, p: Coordinate) -> Result<Vec<ChatGroup>> {
        let now = self.now();
        let mut out = Vec::new();
        for g in self.store.list_of::<ChatGroup>(&Filter::status("open"), Page::ALL)? {
            if !g.area.contains(p) {
                continue;
            }
            let live = self
                .store
                .find::<Alert>(g.alert_id.as_str())?
                .is_some_and(|a| a.value.status == AlertStatus::Active && a.value.covers_time(now));
            if live {
                out.push(g);
            }
        }
        Ok(out)
    }

    pub fn group(&self, who: &Principal, id: &GroupId) -> Result<ChatGroup> {
        let g = self.load_group(id)?.value;
        if !who.is_operator() && !self.is_member(id, &who.user_id)? {
            return Err(Error::NotMember);
        }
        Ok(g)
    }

    pub fn list_groups(&self, who: &Principal, status: Option<GroupStatus>, page: Page) -> Result<Vec<ChatGroup>> {
        who.require_operator()?;
        let filter = status.map_or_else(Filter::all, |s| Filter::status(s.as_str()));
        Ok(self.store.list_of::<ChatGroup>(&filter, page)?)
    }

    /// Eligibility is checked here only; members who later leave the area
    /// stay members.
    pub fn join_group(&self, who: &Principal, id: &GroupId) -> Result<Membership> {
        let account: UserAccount = self.require_verified(who)?;
        let group = self.load_group(id)?.value;
        if group.status == GroupStatus::Closed {
            return Err(Error::GroupClosed);
        }
        if let Some(existing) = self.store.find::<Membership>(&Membership::key(id, &who.user_id))? {
            return Ok(existing.value);
        }
        let inside = account.last_location.is_some_and(|fix| group.area.contains(fix.coordinate));
        if !inside && !who.is_operator() {
            return Err(Error::OutsideArea);
        }
        let m = Membership { group_id: id.clone(), user_id: who.user_id.clone(), joined_at: self.now() };
        match self.store.put(&m, Expect::Absent) {
            Ok(_) => Ok(m),
            Err(StoreError::Conflict { .. }) => {
                Ok(self.store.load::<Membership>(&Membership::key(id, &who.user_id))?.value)
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Appends a message with the group's next sequence number. Operators
    /// may post without joining.
    pub fn post_message(&self, who: &Principal, id: &GroupId, body: &str) -> Result<MessageView> {
        self.require_verified(who)?;
        let max = self.config.chat_max_chars;
        let _lock = self.group_lock(id);
        let current = self.load_group(id)?;
        let mut group = current.value;
        if group.status == GroupStatus::Closed {
            return Err(Error::GroupClosed);
        }
        if !who.is_operator() && !self.is_member(id, &who.user_id)? {
            return Err(Error::NotMember);
        }
        if group.muted_users.contains(&who.user_id) {
            return Err(Error::Muted);
        }
        let len = body.chars().count();
        if body.trim().is_empty() || len > max {
            return Err(Error::BodyInvalid { max });
        }
        let now = self.now();
        let seq = group.next_seq;
        group.next_seq += 1;
        let msg = ChatMessage {
            id: MessageId::for_seq(id, seq),
            group_id: id.clone(),
            seq,
            author_id: who.user_id.clone(),
            body: body.to_owned(),
            created_at: now,
            state: MessageState::Visible,
        };
        self.store.atomically(vec![
            Op::put(&group, Expect::Version(current.version)),
            Op::put(&msg, Expect::Absent),
        ])?;
        let view = MessageView::from(msg);
        let payload = serde_json::to_value(&view).expect("message view serializes");
        self.events.publish_many(&self.group_audience(id)?, EventKind::ChatMessage, &payload, now);
        Ok(view)
    }

    /// Messages with `seq > since_seq`, in sequence order.
    pub fn history(&self, who: &Principal, id: &GroupId, since_seq: u64, limit: usize) -> Result<Vec<MessageView>> {
        self.group(who, id)?;
        let limit = limit.clamp(1, self.config.max_page);
        let mut msgs: Vec<ChatMessage> = self
            .store
            .list_of::<ChatMessage>(&Filter::owner(id.as_str()), Page::ALL)?
            .into_iter()
            .filter(|m| m.seq > since_seq)
            .collect();
        msgs.sort_by_key(|m| m.seq);
        msgs.truncate(limit);
        Ok(msgs.into_iter().map(MessageView::from).collect())
    }

    pub fn moderate(&self, who: &Principal, id: &GroupId, action: ModerationAction) -> Result<ModerationOutcome> {
        who.require_operator()?;
        let _lock = self.group_lock(id);
        let current = self.load_group(id)?;
        let mut group = current.value;
        let now = self.now();
        match action {
            ModerationAction::RemoveMessage { message_id } => {
                let found = self
                    .store
                    .find::<ChatMessage>(message_id.as_str())?
                    .filter(|m| m.value.group_id == *id)
                    .ok_or_else(|| Error::UnknownTarget(message_id.to_string()))?;
                let mut msg = found.value;
                msg.state = transition(msg.state, MessageState::Removed)?;
                self.store.put(&msg, Expect::Version(found.version))?;
                let view = MessageView::from(msg);
                let payload = json!({"group_id": id, "message_id": view.id, "seq": view.seq});
                self.events.publish_many(&self.group_audience(id)?, EventKind::ChatRedaction, &payload, now);
                Ok(ModerationOutcome { group, message: Some(view) })
            }
            ModerationAction::MuteUser { user_id } => {
                self.known_user(&user_id)?;
                group.muted_users.insert(user_id);
                self.store.put(&group, Expect::Version(current.version))?;
                Ok(ModerationOutcome { group, message: None })
            }
            ModerationAction::UnmuteUser { user_id } => {
                self.known_user(&user_id)?;
                group.muted_users.remove(&user_id);
                self.store.put(&group, Expect::Version(current.version))?;
                Ok(ModerationOutcome { group, message: None })
            }
            ModerationAction::CloseGroup => {
                group.status = transition(group.status, GroupStatus::Closed)?;
                self.store.put(&group, Expect::Version(current.version))?;
                Ok(ModerationOutcome { group, message: None })
            }
        }
    }

    fn known_user(&self, id: &UserId) -> Result<()> {
        match self.store.find::<UserAccount>(id.as_str())? {
            Some(_) => Ok(()),
            None => Err(Error::UnknownTarget(id.to_string())),
        }
    }
}
