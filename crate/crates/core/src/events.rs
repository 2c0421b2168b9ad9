//! Per-user ordered event streams with resume tokens.
//!
//! Every user has a gapless sequence starting at 1. A resume token names the
//! last sequence a client saw; replaying from it returns everything after,
//! so a reconnecting client may see duplicates but never misses an event
//! that is still retained.

use std::collections::{HashMap, VecDeque};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::watch;

use crate::ids::UserId;
use crate::time::Timestamp;

pub const DEFAULT_RETENTION: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Alert,
    CaseStatus,
    ChatMessage,
    ChatRedaction,
    GroupOpened,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub at: Timestamp,
    pub payload: Value,
    pub resume_token: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub events: Vec<StreamEvent>,
    /// False when the supplied token was unusable and the replay restarted
    /// from the earliest retained event.
    pub token_accepted: bool,
}

struct UserStream {
    next_seq: u64,
    events: VecDeque<StreamEvent>,
    latest: watch::Sender<u64>,
}

impl UserStream {
    fn new() -> Self {
        let (latest, _) = watch::channel(0);
        Self { next_seq: 1, events: VecDeque::new(), latest }
    }
}

pub struct EventHub {
    retention: usize,
    streams: Mutex<HashMap<UserId, UserStream>>,
}

impl std::fmt::Debug for EventHub {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventHub").field("retention", &self.retention).finish()
    }
}

impl Default for EventHub {
    fn default() -> Self {
        Self::new(DEFAULT_RETENTION)
    }
}

pub fn resume_token(user: &UserId, seq: u64) -> String {
    URL_SAFE_NO_PAD.encode(format!("{user}:{seq}"))
}

fn parse_token(user: &UserId, token: &str) -> Option<u64> {
    let raw = URL_SAFE_NO_PAD.decode(token).ok()?;
    let raw = String::from_utf8(raw).ok()?;
    let (owner, seq) = raw.rsplit_once(':')?;
    if owner != user.as_str() {
        return None;
    }
    seq.parse().ok()
}

impl EventHub {
    pub fn new(retention: usize) -> Self {
        Self { retention: retention.max(1), streams: Mutex::new(HashMap::new()) }
    }

    /// Appends an event to `user`'s stream and returns its sequence number.
    pub fn publish(&self, user: &UserId, kind: EventKind, payload: Value, at: Timestamp) -> u64 {
        let mut streams = self.streams.lock();
        let stream = streams.entry(user.clone()).or_insert_with(UserStream::new);
        let seq = stream.next_seq;
        stream.next_seq += 1;
        stream.events.push_back(StreamEvent { seq, kind, at, payload, resume_token: resume_token(user, seq) });
        while stream.events.len() > self.retention {
            stream.events.pop_front();
        }
        stream.latest.send_replace(seq);
        seq
    }

    pub fn publish_many<'a>(
        &self,
        users: impl IntoIterator<Item = &'a UserId>,
        kind: EventKind,
        payload: &Value,
        at: Timestamp,
    ) {
        for u in users {
            self.publish(u, kind, payload.clone(), at);
        }
    }

    pub fn latest_seq(&self, user: &UserId) -> u64 {
        self.streams.lock().get(user).map_or(0, |s| s.next_seq - 1)
    }

    /// Events after the token's position, or the whole retained stream when
    /// there is no usable token.
    pub fn replay(&self, user: &UserId, token: Option<&str>) -> Replay {
        let streams = self.streams.lock();
        let Some(stream) = streams.get(user) else {
            let accepted = token.is_none_or(|t| parse_token(user, t) == Some(0));
            return Replay { events: Vec::new(), token_accepted: accepted };
        };
        let latest = stream.next_seq - 1;
        let after = match token.map(|t| parse_token(user, t)) {
            None => None,
            Some(Some(seq)) if seq <= latest => Some(seq),
            Some(_) => {
                return Replay { events: stream.events.iter().cloned().collect(), token_accepted: false };
            }
        };
        let after = after.unwrap_or(0);
        Replay {
            events: stream.events.iter().filter(|e| e.seq > after).cloned().collect(),
            token_accepted: true,
        }
    }

    /// A receiver that changes whenever `user` gets a new event.
    pub fn subscribe(&self, user: &UserId) -> watch::Receiver<u64> {
        let mut streams = self.streams.lock();
        streams.entry(user.clone()).or_insert_with(UserStream::new).latest.subscribe()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn u(s: &str) -> UserId {
        UserId::from(s)
    }

    #[test]
    fn seqs_are_gapless_per_user() {
        let hub = EventHub::default();
        for i in 0..5 {
            assert_eq!(hub.publish(&u("a"), EventKind::Alert, json!(i), Timestamp(i)), i as u64 + 1);
        }
        assert_eq!(hub.publish(&u("b"), EventKind::Alert, json!(0), Timestamp(0)), 1);
        assert_eq!(hub.latest_seq(&u("a")), 5);
    }

    #[test]
    fn resume_replays_after_token() {
        let hub = EventHub::default();
        for i in 0..8 {
            hub.publish(&u("a"), EventKind::ChatMessage, json!(i), Timestamp(i));
        }
        let first = hub.replay(&u("a"), None);
        let token = first.events[4].resume_token.clone();
        let again = hub.replay(&u("a"), Some(&token));
        assert!(again.token_accepted);
        assert_eq!(again.events.first().unwrap().seq, 6);
        assert_eq!(again.events.len(), 3);
    }

    #[test]
    fn garbage_or_foreign_token_replays_everything() {
        let hub = EventHub::default();
        for i in 0..3 {
            hub.publish(&u("a"), EventKind::Alert, json!(i), Timestamp(i));
        }
        let r = hub.replay(&u("a"), Some("%%%garbage"));
        assert!(!r.token_accepted);
        assert_eq!(r.events.len(), 3);
        let foreign = resume_token(&u("b"), 1);
        assert!(!hub.replay(&u("a"), Some(&foreign)).token_accepted);
        let future = resume_token(&u("a"), 99);
        assert_eq!(hub.replay(&u("a"), Some(&future)).events.len(), 3);
    }

    #[test]
    fn retention_drops_oldest() {
        let hub = EventHub::new(2);
        for i in 0..4 {
            hub.publish(&u("a"), EventKind::Alert, json!(i), Timestamp(i));
        }
        let seqs: Vec<u64> = hub.replay(&u("a"), None).events.iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![3, 4]);
    }

    #[test]
    fn subscribers_see_new_seq() {
        let hub = EventHub::default();
        let mut rx = hub.subscribe(&u("a"));
        hub.publish(&u("a"), EventKind::Alert, json!(1), Timestamp(0));
        assert!(rx.has_changed().unwrap());
        assert_eq!(*rx.borrow_and_update(), 1);
    }
}
